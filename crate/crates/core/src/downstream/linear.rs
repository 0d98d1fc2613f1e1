use nalgebra::{DMatrix, DVector};

use super::pca::to_dmatrix;
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const DEFAULT_RIDGE_ALPHA: f64 = 0.001;

/// A fitted affine predictor `y = x·coef + intercept`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.coef.len() {
            return Err(Error::Shape {
                op: "linear predict",
                left: x.shape(),
                right: (self.coef.len(), 1),
            });
        }
        Ok((0..x.rows())
            .map(|r| self.intercept + x.row(r).iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape {
            op: "regression",
            left: x.shape(),
            right: (y.len(), 1),
        });
    }
    if x.rows() < 2 {
        return Err(Error::invalid("regression needs at least 2 samples"));
    }
    Ok(())
}

/// Column means, centered design, y mean and centered y.
fn center(x: &Matrix, y: &[f64]) -> (Vec<f64>, DMatrix<f64>, f64, DVector<f64>) {
    let means = x.column_means().into_data();
    let mut xc = to_dmatrix(x);
    for (c, mean) in means.iter().enumerate() {
        xc.column_mut(c).add_scalar_mut(-mean);
    }
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ym));
    (means, xc, ym, yc)
}

fn intercept(means: &[f64], ym: f64, coef: &[f64]) -> f64 {
    ym - means.iter().zip(coef).map(|(m, b)| m * b).sum::<f64>()
}

/// Minimizes Σ(y − β0 − xβ)² + α‖β‖² with an unpenalized intercept.
pub fn ridge_fit(x: &Matrix, y: &[f64], alpha: f64) -> Result<LinearModel> {
    check_xy(x, y)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("ridge alpha must be finite and >= 0, got {alpha}")));
    }
    let (means, xc, ym, yc) = center(x, y);
    let f = x.cols();
    let mut gram = xc.tr_mul(&xc);
    for i in 0..f {
        gram[(i, i)] += alpha;
    }
    let rhs = xc.tr_mul(&yc);
    let scale = (0..f).map(|i| gram[(i, i)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let chol = gram.cholesky().filter(|c| {
        let l = c.l_dirty();
        (0..f).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * scale)
    });
    let Some(chol) = chol else {
        return Err(Error::Singular(format!(
            "ridge system is singular at alpha={alpha} (collinear features); use alpha > 0"
        )));
    };
    let coef: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    Ok(LinearModel {
        intercept: intercept(&means, ym, &coef),
        coef,
    })
}

/// Partial least squares for a single response, fitted with NIPALS.
#[derive(Clone, Debug, PartialEq)]
pub struct PlsModel {
    pub linear: LinearModel,
    /// F×A weights.
    pub weights: Matrix,
    /// F×A loadings.
    pub loadings: Matrix,
    /// M×A scores.
    pub scores: Matrix,
    pub y_loadings: Vec<f64>,
}

impl PlsModel {
    pub fn components(&self) -> usize {
        self.y_loadings.len()
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.linear.predict(x)
    }
}

pub fn plsr_fit(x: &Matrix, y: &[f64], n_components: usize) -> Result<PlsModel> {
    check_xy(x, y)?;
    let (m, f) = x.shape();
    if n_components == 0 || n_components > (m - 1).min(f) {
        return Err(Error::invalid(format!(
            "PLSR needs 1 <= components <= min(rows - 1, cols) = {}, got {n_components}",
            (m - 1).min(f)
        )));
    }
    let (means, mut xd, ym, mut yd) = center(x, y);
    if yd.norm_squared() == 0.0 {
        return Err(Error::Degenerate("PLSR response has zero variance".into()));
    }
    let mut w_cols = Vec::new();
    let mut p_cols = Vec::new();
    let mut t_cols = Vec::new();
    let mut q = Vec::new();
    for _ in 0..n_components {
        let mut w = xd.tr_mul(&yd);
        let norm = w.norm();
        if norm <= 1e-14 * (1.0 + yd.norm()) {
            break;
        }
        w /= norm;
        let t = &xd * &w;
        let tt = t.norm_squared();
        if tt <= 0.0 {
            break;
        }
        let p = xd.tr_mul(&t) / tt;
        let qa = yd.dot(&t) / tt;
        xd -= &t * p.transpose();
        yd -= &t * qa;
        w_cols.push(w);
        p_cols.push(p);
        t_cols.push(t);
        q.push(qa);
    }
    let a = q.len();
    let w = DMatrix::from_columns(&w_cols);
    let p = DMatrix::from_columns(&p_cols);
    let t = DMatrix::from_columns(&t_cols);
    let ptw = p.tr_mul(&w);
    let inner = ptw
        .lu()
        .solve(&DVector::from_vec(q.clone()))
        .ok_or_else(|| Error::Singular("PLSR loading-weight product is singular".into()))?;
    let coef: Vec<f64> = (&w * inner).iter().copied().collect();
    let to_matrix = |d: &DMatrix<f64>, rows: usize| super::pca::from_dmatrix(&d.clone().resize(rows, a, 0.0));
    Ok(PlsModel {
        linear: LinearModel {
            intercept: intercept(&means, ym, &coef),
            coef,
        },
        weights: to_matrix(&w, f),
        loadings: to_matrix(&p, f),
        scores: to_matrix(&t, m),
        y_loadings: q,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn problem(rows: usize, cols: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
        (x, y)
    }

    /// Least squares through an SVD of the design with a ones column.
    fn ols(x: &Matrix, y: &[f64]) -> Vec<f64> {
        let mut a = DMatrix::from_element(x.rows(), x.cols() + 1, 1.0);
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                a[(r, c + 1)] = x.get(r, c);
            }
        }
        let b = DVector::from_column_slice(y);
        let sol = a.svd(true, true).solve(&b, 1e-14).unwrap();
        let coef: Vec<f64> = sol.iter().skip(1).copied().collect();
        (0..x.rows())
            .map(|r| sol[0] + x.row(r).iter().zip(&coef).map(|(u, v)| u * v).sum::<f64>())
            .collect()
    }

    #[test]
    fn ridge_recovers_exact_line() {
        let x = Matrix::column_vector(vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = [0.0, 2.0, 4.0, 6.0, 8.0];
        let m = ridge_fit(&x, &y, 0.0).unwrap();
        assert!((m.coef[0] - 2.0).abs() < 1e-10);
        assert!(m.intercept.abs() < 1e-10);
    }

    #[test]
    fn ridge_zero_alpha_is_ols() {
        let (x, y) = problem(30, 4, 1);
        let pred = ridge_fit(&x, &y, 0.0).unwrap().predict(&x).unwrap();
        for (a, b) in pred.iter().zip(ols(&x, &y)) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_huge_alpha_predicts_mean() {
        let (x, y) = problem(20, 3, 2);
        let m = ridge_fit(&x, &y, 1e14).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!(m.coef.iter().all(|c| c.abs() < 1e-10));
        for p in m.predict(&x).unwrap() {
            assert!((p - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_objective_gradient_vanishes() {
        let (x, y) = problem(50, 5, 3);
        let alpha = 0.7;
        let m = ridge_fit(&x, &y, alpha).unwrap();
        let resid: Vec<f64> = m.predict(&x).unwrap().iter().zip(&y).map(|(p, t)| t - p).collect();
        // dJ/dβ0 = −2Σr, dJ/dβj = −2Σ r x_j + 2αβj
        assert!(resid.iter().sum::<f64>().abs() < 1e-8);
        for j in 0..5 {
            let g: f64 = -2.0 * (0..50).map(|i| resid[i] * x.get(i, j)).sum::<f64>() + 2.0 * alpha * m.coef[j];
            assert!(g.abs() < 1e-8, "gradient {g}");
        }
    }

    #[test]
    fn ridge_collinear_needs_alpha() {
        let x = Matrix::from_vec(4, 2, vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]).unwrap();
        let y = [1.0, 2.0, 2.5, 4.0];
        assert!(matches!(ridge_fit(&x, &y, 0.0), Err(Error::Singular(_))));
        assert!(ridge_fit(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn pls_full_components_is_ols() {
        let (x, y) = problem(25, 4, 4);
        let m = plsr_fit(&x, &y, 4).unwrap();
        for (a, b) in m.predict(&x).unwrap().iter().zip(ols(&x, &y)) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn pls_scores_orthogonal() {
        let (x, y) = problem(25, 6, 5);
        let m = plsr_fit(&x, &y, 5).unwrap();
        let g = m.scores.matmul_tn(&m.scores).unwrap();
        for i in 0..5 {
            for j in 0..i {
                assert!(g.get(i, j).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pls_one_component_on_proportional_response() {
        let (x, _) = problem(20, 3, 6);
        let y = x.column(0).iter().map(|v| 3.0 * v).collect::<Vec<_>>();
        let x1 = x.slice_cols(0, 1).unwrap();
        let m = plsr_fit(&x1, &y, 1).unwrap();
        let r2 = crate::downstream::r2_score(&y, &m.predict(&x1).unwrap()).unwrap();
        assert!((r2 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pls_rejects_constant_response_and_bad_counts() {
        let (x, _) = problem(10, 3, 7);
        assert!(plsr_fit(&x, &[1.0; 10], 1).is_err());
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(plsr_fit(&x, &y, 4).is_err());
        assert!(plsr_fit(&x, &y, 0).is_err());
    }
}
