//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation applied to [`Value`]s in the order it
//! happens, so operands always precede their results. [`Value::backward`]
//! walks the tape once in reverse and returns a [`Gradients`] table with one
//! entry per recorded node. A tape is meant to live for a single forward and
//! backward pass.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

/// Columns whose centred norm falls below this are treated as constant.
const DEGENERATE_NORM: f64 = 1e-12;

enum Op {
    Leaf,
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Square(usize),
    Selu(usize),
    Sigmoid(usize),
    ConcatCols(Vec<usize>),
    SliceCols { src: usize, start: usize },
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    Corr { src: usize, centered: Matrix, norms: Vec<f64> },
    TriuAbsSum(usize),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Clone, Default)]
pub struct Tape {
    nodes: Rc<RefCell<Vec<Node>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a differentiable leaf (a parameter or an input we want gradients for).
    pub fn var(&self, value: Matrix) -> Value {
        self.push(value, Op::Leaf)
    }

    /// Records a leaf that callers do not intend to differentiate. Gradients
    /// still flow into it; they are simply never read.
    pub fn constant(&self, value: Matrix) -> Value {
        self.push(value, Op::Leaf)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op) -> Value {
        let (rows, cols) = value.shape();
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Value {
            tape: self.clone(),
            idx: nodes.len() - 1,
            rows,
            cols,
        }
    }

    fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone)]
pub struct Value {
    tape: Tape,
    idx: usize,
    rows: usize,
    cols: usize,
}

impl std::fmt::Debug for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Value")
            .field("idx", &self.idx)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Value {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Borrow the forward value.
    pub fn borrow_value(&self) -> Ref<'_, Matrix> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.idx].value)
    }

    pub fn value(&self) -> Matrix {
        self.borrow_value().clone()
    }

    /// Scalar value of a 1×1 node.
    pub fn item(&self) -> f64 {
        self.borrow_value().data()[0]
    }

    fn check_tape(&self, other: &Value) {
        assert!(
            self.tape.same(&other.tape),
            "values recorded on different tapes"
        );
    }

    fn unary(&self, op: Op, f: impl FnOnce(&Matrix) -> Matrix) -> Value {
        let out = f(&self.borrow_value());
        self.tape.push(out, op)
    }

    pub fn matmul(&self, rhs: &Value) -> Result<Value> {
        self.check_tape(rhs);
        let out = self.borrow_value().matmul(&rhs.borrow_value())?;
        Ok(self.tape.push(out, Op::MatMul(self.idx, rhs.idx)))
    }

    /// Adds a 1×cols row to every row.
    pub fn add_row(&self, bias: &Value) -> Result<Value> {
        self.check_tape(bias);
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(Error::Shape {
                op: "add_row",
                left: self.shape(),
                right: bias.shape(),
            });
        }
        let out = {
            let x = self.borrow_value();
            let b = bias.borrow_value();
            let mut out = x.clone();
            for r in 0..out.rows() {
                for (o, v) in out.row_mut(r).iter_mut().zip(b.data()) {
                    *o += v;
                }
            }
            out
        };
        Ok(self.tape.push(out, Op::AddRow(self.idx, bias.idx)))
    }

    pub fn add(&self, rhs: &Value) -> Result<Value> {
        self.check_tape(rhs);
        let out = self.borrow_value().add(&rhs.borrow_value())?;
        Ok(self.tape.push(out, Op::Add(self.idx, rhs.idx)))
    }

    pub fn sub(&self, rhs: &Value) -> Result<Value> {
        self.check_tape(rhs);
        let out = self.borrow_value().sub(&rhs.borrow_value())?;
        Ok(self.tape.push(out, Op::Sub(self.idx, rhs.idx)))
    }

    /// Elementwise product.
    pub fn mul(&self, rhs: &Value) -> Result<Value> {
        self.check_tape(rhs);
        let out = self
            .borrow_value()
            .zip_map(&rhs.borrow_value(), "mul", |a, b| a * b)?;
        Ok(self.tape.push(out, Op::Mul(self.idx, rhs.idx)))
    }

    pub fn scale(&self, s: f64) -> Value {
        self.unary(Op::Scale(self.idx, s), |x| x.scale(s))
    }

    pub fn square(&self) -> Value {
        self.unary(Op::Square(self.idx), |x| x.map(|v| v * v))
    }

    pub fn selu(&self) -> Value {
        self.unary(Op::Selu(self.idx), |x| x.map(selu))
    }

    pub fn sigmoid(&self) -> Value {
        self.unary(Op::Sigmoid(self.idx), |x| x.map(sigmoid))
    }

    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Value> {
        let out = self.borrow_value().slice_cols(start, width)?;
        Ok(self.tape.push(
            out,
            Op::SliceCols {
                src: self.idx,
                start,
            },
        ))
    }

    /// Reinterprets the row-major data under a new shape.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Value> {
        if rows * cols != self.rows * self.cols {
            return Err(Error::Shape {
                op: "reshape",
                left: self.shape(),
                right: (rows, cols),
            });
        }
        let out = self.borrow_value().reshape(rows, cols)?;
        Ok(self.tape.push(out, Op::Reshape(self.idx)))
    }

    pub fn sum(&self) -> Value {
        self.unary(Op::Sum(self.idx), |x| Matrix::row_vector(vec![x.sum()]))
    }

    pub fn mean(&self) -> Value {
        self.unary(Op::Mean(self.idx), |x| Matrix::row_vector(vec![x.mean()]))
    }

    /// Pearson correlation between the columns of a B×L batch, as an L×L
    /// matrix. Constant columns correlate 0 with everything and 1 with
    /// themselves.
    pub fn corr_matrix(&self) -> Result<Value> {
        if self.rows < 2 {
            return Err(Error::invalid(format!(
                "correlation needs at least 2 rows, got {}",
                self.rows
            )));
        }
        let (corr, centered, norms) = {
            let x = self.borrow_value();
            correlation_parts(&x)
        };
        Ok(self.tape.push(
            corr,
            Op::Corr {
                src: self.idx,
                centered,
                norms,
            },
        ))
    }

    /// Σ_{i<j} |x_ij| over a square matrix.
    pub fn triu_abs_sum(&self) -> Result<Value> {
        if self.rows != self.cols {
            return Err(Error::Shape {
                op: "triu_abs_sum",
                left: self.shape(),
                right: (self.cols, self.rows),
            });
        }
        Ok(self.unary(Op::TriuAbsSum(self.idx), |x| {
            let n = x.rows();
            let mut s = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    s += x.get(i, j).abs();
                }
            }
            Matrix::row_vector(vec![s])
        }))
    }

    /// Reverse pass from a scalar.
    pub fn backward(&self) -> Result<Gradients> {
        if self.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: self.shape(),
                right: (1, 1),
            });
        }
        let nodes = self.tape.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        grads[self.idx] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=self.idx).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            propagate(&nodes, idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            tape: self.tape.clone(),
            grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], idx: usize, g: Matrix) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn propagate(nodes: &[Node], idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
    let node = &nodes[idx];
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            accumulate(grads, *a, g.matmul_nt(bv)?);
            accumulate(grads, *b, av.matmul_tn(g)?);
        }
        Op::AddRow(x, b) => {
            accumulate(grads, *x, g.clone());
            let mut sums = vec![0.0; g.cols()];
            for r in 0..g.rows() {
                for (s, v) in sums.iter_mut().zip(g.row(r)) {
                    *s += v;
                }
            }
            accumulate(grads, *b, Matrix::row_vector(sums));
        }
        Op::Add(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.scale(-1.0));
        }
        Op::Mul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            accumulate(grads, *a, g.zip_map(bv, "mul", |g, b| g * b)?);
            accumulate(grads, *b, g.zip_map(av, "mul", |g, a| g * a)?);
        }
        Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
        Op::Square(a) => {
            let av = &nodes[*a].value;
            accumulate(grads, *a, g.zip_map(av, "square", |g, x| 2.0 * x * g)?);
        }
        Op::Selu(a) => {
            let av = &nodes[*a].value;
            accumulate(grads, *a, g.zip_map(av, "selu", |g, x| g * selu_grad(x))?);
        }
        Op::Sigmoid(src) => {
            let y = &node.value;
            accumulate(grads, *src, g.zip_map(y, "sigmoid", |g, y| g * y * (1.0 - y))?);
        }
        Op::ConcatCols(parts) => {
            let mut start = 0;
            for &p in parts {
                let w = nodes[p].value.cols();
                accumulate(grads, p, g.slice_cols(start, w)?);
                start += w;
            }
        }
        Op::SliceCols { src, start } => {
            let (rows, cols) = nodes[*src].value.shape();
            let mut full = Matrix::zeros(rows, cols);
            for r in 0..rows {
                full.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
            }
            accumulate(grads, *src, full);
        }
        Op::Reshape(src) => {
            let (rows, cols) = nodes[*src].value.shape();
            accumulate(grads, *src, g.reshape(rows, cols)?);
        }
        Op::Sum(src) => {
            let (rows, cols) = nodes[*src].value.shape();
            accumulate(grads, *src, Matrix::filled(rows, cols, g.data()[0]));
        }
        Op::Mean(src) => {
            let (rows, cols) = nodes[*src].value.shape();
            let n = (rows * cols) as f64;
            accumulate(grads, *src, Matrix::filled(rows, cols, g.data()[0] / n));
        }
        Op::Corr {
            src,
            centered,
            norms,
        } => {
            accumulate(grads, *src, corr_backward(&node.value, centered, norms, g)?);
        }
        Op::TriuAbsSum(src) => {
            let x = &nodes[*src].value;
            let n = x.rows();
            let mut out = Matrix::zeros(n, n);
            let gs = g.data()[0];
            for i in 0..n {
                for j in i + 1..n {
                    let v = x.get(i, j);
                    // subgradient 0 at exactly 0
                    let s = if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    out.set(i, j, gs * s);
                }
            }
            accumulate(grads, *src, out);
        }
    }
    Ok(())
}

/// Returns (correlation, centred data, column norms).
fn correlation_parts(x: &Matrix) -> (Matrix, Matrix, Vec<f64>) {
    let means = x.column_means();
    let mut centered = x.clone();
    for r in 0..centered.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(means.data()) {
            *v -= m;
        }
    }
    let cov = centered
        .matmul_tn(&centered)
        .expect("square product of one matrix");
    let l = x.cols();
    let norms: Vec<f64> = (0..l).map(|i| cov.get(i, i).max(0.0).sqrt()).collect();
    let mut corr = Matrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let v = if i == j {
                1.0
            } else if norms[i] <= DEGENERATE_NORM || norms[j] <= DEGENERATE_NORM {
                0.0
            } else {
                (cov.get(i, j) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            corr.set(i, j, v);
        }
    }
    (corr, centered, norms)
}

fn corr_backward(corr: &Matrix, centered: &Matrix, norms: &[f64], g: &Matrix) -> Result<Matrix> {
    let l = norms.len();
    let live: Vec<bool> = norms.iter().map(|&n| n > DEGENERATE_NORM).collect();
    // gradient w.r.t. the (unsymmetrised) scatter matrix S = XcᵀXc
    let mut gs = Matrix::zeros(l, l);
    for k in 0..l {
        if !live[k] {
            continue;
        }
        let mut diag = 0.0;
        for j in 0..l {
            if j == k || !live[j] {
                continue;
            }
            gs.set(k, j, g.get(k, j) / (norms[k] * norms[j]));
            diag -= (g.get(k, j) + g.get(j, k)) * corr.get(k, j);
        }
        gs.set(k, k, diag / (2.0 * norms[k] * norms[k]));
    }
    let sym = gs.add(&gs.transpose())?;
    let mut dxc = centered.matmul(&sym)?;
    let means = dxc.column_means();
    for r in 0..dxc.rows() {
        for (v, m) in dxc.row_mut(r).iter_mut().zip(means.data()) {
            *v -= m;
        }
    }
    Ok(dxc)
}

/// Horizontal concatenation of values sharing a row count.
pub fn concat_cols(parts: &[Value]) -> Result<Value> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat_cols of zero parts"))?;
    for p in parts {
        first.check_tape(p);
    }
    let out = {
        let borrowed: Vec<Ref<'_, Matrix>> = parts.iter().map(|p| p.borrow_value()).collect();
        let refs: Vec<&Matrix> = borrowed.iter().map(|r| &**r).collect();
        Matrix::hcat(&refs)?
    };
    let idx = parts.iter().map(|p| p.idx).collect();
    Ok(first.tape.push(out, Op::ConcatCols(idx)))
}

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

#[inline]
fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradient table produced by [`Value::backward`].
pub struct Gradients {
    tape: Tape,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; all zeros when `v` does not reach the loss.
    pub fn get(&self, v: &Value) -> Matrix {
        assert!(self.tape.same(&v.tape), "value from a different tape");
        self.grads
            .get(v.idx)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| Matrix::zeros(v.rows, v.cols))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Central differences on `f` at `x`, h = 1e-5.
    fn numeric_grad(x: &Matrix, f: &dyn Fn(&Matrix) -> f64) -> Matrix {
        let h = 1e-5;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            out.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        let num: f64 = a.sub(b).unwrap().data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let den: f64 = a.data().iter().chain(b.data()).map(|v| v * v).sum::<f64>().sqrt();
        num / den.max(1e-12)
    }

    /// Checks the tape gradient of a scalar function of one input.
    fn check(x: &Matrix, build: impl Fn(&Value) -> Value) {
        let tape = Tape::new();
        let v = tape.var(x.clone());
        let loss = build(&v);
        let analytic = loss.backward().unwrap().get(&v);
        let numeric = numeric_grad(x, &|m| {
            let t = Tape::new();
            build(&t.var(m.clone())).item()
        });
        let err = rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "relative gradient error {err}");
    }

    #[test]
    fn selu_values() {
        assert_eq!(selu(0.0), 0.0);
        assert_eq!(selu(1.0), 1.050_700_987_355_480_5);
        let expected = SELU_LAMBDA * SELU_ALPHA * ((-1.0f64).exp() - 1.0);
        assert!((selu(-1.0) - expected).abs() < 1e-15);
        assert!((selu(-1.0) + 1.111_330_7).abs() < 1e-7);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((1.0 - sigmoid(50.0)).abs() < 1e-15);
        assert!((sigmoid(-1.0) - 0.268_941_421_369_995_1).abs() < 1e-15);
    }

    #[test]
    fn matmul_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(3, 4, &mut rng);
        let b = random(4, 2, &mut rng);
        check(&a, |v| {
            let bv = v.tape().constant(b.clone());
            v.matmul(&bv).unwrap().sum()
        });
        check(&b, |v| {
            let av = v.tape().constant(a.clone());
            av.matmul(v).unwrap().square().sum()
        });
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(3, 3, &mut rng);
        let w = random(3, 3, &mut rng);
        check(&x, |v| v.selu().square().sum());
        check(&x, |v| v.sigmoid().square().mean());
        check(&x, |v| {
            let c = v.tape().constant(w.clone());
            v.mul(&c).unwrap().sub(&c).unwrap().add(v).unwrap().scale(0.3).square().sum()
        });
        let bias = random(1, 3, &mut rng);
        check(&bias, |b| {
            let xv = b.tape().constant(x.clone());
            xv.add_row(b).unwrap().selu().square().sum()
        });
    }

    #[test]
    fn concat_slice_reshape_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(2, 5, &mut rng);
        check(&x, |v| v.slice_cols(1, 3).unwrap().square().sum());
        check(&x, |v| {
            let a = v.slice_cols(0, 2).unwrap();
            let b = v.slice_cols(2, 3).unwrap();
            concat_cols(&[b, a.scale(2.0)]).unwrap().square().sum()
        });
        check(&x, |v| v.reshape(5, 2).unwrap().selu().square().sum());
    }

    #[test]
    fn concat_slice_round_trip_and_unit_gradients() {
        let tape = Tape::new();
        let a = tape.var(Matrix::from_rows(&[[1.0]]).unwrap());
        let b = tape.var(Matrix::from_rows(&[[2.0]]).unwrap());
        let c = concat_cols(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.value().data(), &[1.0, 2.0]);
        assert_eq!(c.slice_cols(0, 1).unwrap().value(), a.value());
        assert_eq!(c.slice_cols(1, 1).unwrap().value(), b.value());
        let g = c.sum().backward().unwrap();
        assert_eq!(g.get(&a).data(), &[1.0]);
        assert_eq!(g.get(&b).data(), &[1.0]);

        let x = tape.var(Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        assert_eq!(x.slice_cols(1, 2).unwrap().value().data(), &[2.0, 3.0]);
        assert_eq!(x.slice_cols(0, 3).unwrap().value(), x.value());
        assert!(matches!(x.slice_cols(2, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn corr_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(8, 4, &mut rng);
        let w = random(4, 4, &mut rng);
        check(&x, |v| {
            let c = v.corr_matrix().unwrap();
            let wv = v.tape().constant(w.clone());
            c.mul(&wv).unwrap().sum()
        });
        check(&x, |v| v.corr_matrix().unwrap().triu_abs_sum().unwrap());
    }

    #[test]
    fn backward_rules() {
        let tape = Tape::new();
        let w = tape.var(Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap());
        let unused = tape.var(Matrix::filled(2, 2, 7.0));
        let g = w.sum().backward().unwrap();
        assert_eq!(g.get(&w), Matrix::filled(2, 2, 1.0));
        assert_eq!(g.get(&unused), Matrix::zeros(2, 2));
        assert!(matches!(w.backward(), Err(Error::Shape { .. })));
    }

    #[test]
    fn squared_norm_gradient_is_outer_product() {
        // ‖Wx‖² → 2(Wx)xᵀ
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random(3, 4, &mut rng);
        let x = random(4, 1, &mut rng);
        let tape = Tape::new();
        let wv = tape.var(w.clone());
        let xv = tape.constant(x.clone());
        let loss = wv.matmul(&xv).unwrap().square().sum();
        let got = loss.backward().unwrap().get(&wv);
        let expected = w.matmul(&x).unwrap().matmul_nt(&x).unwrap().scale(2.0);
        assert!(rel_err(&got, &expected) < 1e-14);
    }

    #[test]
    fn repeated_backward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(6, 3, &mut rng);
        let run = || {
            let tape = Tape::new();
            let v = tape.var(x.clone());
            let loss = v.selu().corr_matrix().unwrap().triu_abs_sum().unwrap();
            loss.backward().unwrap().get(&v)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn tape_is_topologically_ordered() {
        let tape = Tape::new();
        let a = tape.var(Matrix::filled(1, 1, 2.0));
        let b = a.square();
        let c = b.add(&a).unwrap();
        assert!(a.idx < b.idx && b.idx < c.idx);
        assert_eq!(tape.len(), 3);
    }
}
