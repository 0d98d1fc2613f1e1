use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::line_search::{wolfe_line_search, WolfeParams};
use crate::error::{Error, Result};

/// Pairs with sᵀy at or below this are dropped.
pub const CURVATURE_FLOOR: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory inverse-Hessian history.
#[derive(Clone, Debug)]
pub struct LbfgsState {
    history: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    blocks: Vec<Range<usize>>,
    pub iterations: usize,
}

impl LbfgsState {
    pub fn new(history: usize) -> Self {
        LbfgsState {
            history: history.max(1),
            pairs: VecDeque::with_capacity(history),
            blocks: Vec::new(),
            iterations: 0,
        }
    }

    /// Scales the initial inverse Hessian separately on each index range,
    /// so parameter groups with very different curvature each get their own
    /// γ. Indices outside every range keep the global γ.
    pub fn with_blocks(mut self, blocks: Vec<Range<usize>>) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores (s, y) if it has positive curvature; returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > CURVATURE_FLOOR) || !sy.is_finite() {
            return false;
        }
        if self.pairs.len() == self.history {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(s, y, _)| (s.as_slice(), y.as_slice()))
    }

    /// Two-loop recursion: returns −H·g, with H⁰ = γI and
    /// γ = sᵀy / yᵀy from the newest pair (γ = 1 with no history).
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = self
            .pairs
            .back()
            .map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        let mut scaled = vec![false; q.len()];
        if let Some((s, y, _)) = self.pairs.back() {
            for b in &self.blocks {
                let (sb, yb) = (&s[b.clone()], &y[b.clone()]);
                let (sy, yy) = (dot(sb, yb), dot(yb, yb));
                if sy > 0.0 && yy > 0.0 {
                    let g = sy / yy;
                    q[b.clone()].iter_mut().for_each(|v| *v *= g);
                    scaled[b.clone()].iter_mut().for_each(|f| *f = true);
                }
            }
        }
        q.iter_mut().zip(&scaled).filter(|(_, f)| !**f).for_each(|(v, _)| *v *= gamma);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub history: usize,
    pub wolfe: WolfeParams,
    pub max_iterations: usize,
    /// Stop once ‖∇f‖∞ falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 10,
            wolfe: WolfeParams::default(),
            max_iterations: 200,
            grad_tol: 1e-12,
        }
    }
}

/// One accepted iterate: the point, direction and step taken from it.
#[derive(Clone, Debug)]
pub struct Step {
    pub x: Vec<f64>,
    pub f: f64,
    pub direction: Vec<f64>,
    pub alpha: f64,
    pub f_new: f64,
    pub wolfe_satisfied: bool,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub steps: Vec<Step>,
    pub converged: bool,
}

/// Initial trial step: unit for quasi-Newton directions, scaled down on the
/// first (steepest-descent) iteration.
pub(crate) fn initial_step(state: &LbfgsState, grad: &[f64]) -> f64 {
    if state.is_empty() {
        let norm = dot(grad, grad).sqrt();
        if norm > 0.0 {
            (1.0 / norm).min(1.0)
        } else {
            1.0
        }
    } else {
        1.0
    }
}

/// Minimizes `objective` (returning value and gradient) from `x0`.
pub fn minimize<F>(mut objective: F, x0: &[f64], config: &LbfgsConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    config.wolfe.validate()?;
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x)?;
    let mut evaluations = 1;
    let mut state = LbfgsState::new(config.history);
    let mut steps = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iterations {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= config.grad_tol {
            converged = true;
            break;
        }
        if !f.is_finite() {
            return Err(Error::Diverged {
                epoch: state.iterations,
                msg: "objective is not finite".into(),
            });
        }
        let mut p = state.direction(&g);
        if !(dot(&p, &g) < 0.0) {
            state.clear();
            p = g.iter().map(|v| -v).collect();
        }
        let alpha0 = initial_step(&state, &g);
        let ls = wolfe_line_search(&mut objective, &x, f, &g, &p, alpha0, &config.wolfe)?;
        evaluations += ls.evals;
        if ls.alpha == 0.0 {
            if state.is_empty() {
                break;
            }
            state.clear();
            continue;
        }
        let s: Vec<f64> = p.iter().map(|v| ls.alpha * v).collect();
        let y: Vec<f64> = ls.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        steps.push(Step {
            x: x.clone(),
            f,
            direction: p,
            alpha: ls.alpha,
            f_new: ls.f,
            wolfe_satisfied: ls.satisfied,
        });
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        state.push(s, y);
        state.iterations += 1;
        f = ls.f;
        g = ls.grad;
    }
    if !converged {
        converged = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= config.grad_tol;
    }
    Ok(Minimum {
        x,
        f,
        grad: g,
        iterations: state.iterations,
        evaluations,
        steps,
        converged,
    })
}

/// Plain gradient step `w − lr·∇`.
pub fn gd_step(params: &[f64], grad: &[f64], learning_rate: f64) -> Result<Vec<f64>> {
    if !(learning_rate > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {learning_rate}")));
    }
    if params.len() != grad.len() {
        return Err(Error::Shape {
            op: "gd_step",
            left: (params.len(), 1),
            right: (grad.len(), 1),
        });
    }
    Ok(params.iter().zip(grad).map(|(w, g)| w - learning_rate * g).collect())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn diag_quadratic(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let f = 0.5 * (x[0] * x[0] + 10.0 * x[1] * x[1]);
        Ok((f, vec![x[0], 10.0 * x[1]]))
    }

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn empty_history_is_steepest_descent() {
        let s = LbfgsState::new(5);
        assert_eq!(s.direction(&[1.0, -2.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn quadratic_reaches_exact_minimum() {
        let m = minimize(diag_quadratic, &[1.0, 1.0], &LbfgsConfig::default()).unwrap();
        let dist = m.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dist < 1e-10, "distance {dist} after {} iterations", m.iterations);
        assert!(m.iterations <= 5, "{} iterations", m.iterations);
        assert!(m.steps.windows(2).all(|w| w[1].f <= w[0].f));
    }

    #[test]
    fn rosenbrock_converges() {
        let cfg = LbfgsConfig::default();
        let m = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(m.f < 1e-8, "f = {} after {} iterations", m.f, m.iterations);
        assert!(m.iterations <= 200);
    }

    #[test]
    fn directions_descend_and_pairs_are_curved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = LbfgsState::new(4);
        for _ in 0..50 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            state.push(s, y);
            assert!(state.len() <= 4);
            assert!(state.pairs().all(|(s, y)| dot(s, y) > CURVATURE_FLOOR));
            let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = state.direction(&g);
            assert!(dot(&p, &g) < 0.0);
        }
        assert!(!state.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
    }

    #[test]
    fn gd_cases() {
        assert_eq!(gd_step(&[1.0, 2.0], &[0.0, 0.0], 0.5).unwrap(), vec![1.0, 2.0]);
        let w = gd_step(&[3.0], &[6.0], 0.1).unwrap();
        assert!((w[0] - 2.4).abs() < 1e-15);
        assert!(gd_step(&[1.0], &[1.0], 0.0).is_err());

        // f = ½·(x² + 10y²), L = 10, lr < 2/L
        let mut w = vec![1.0, 1.0];
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let (f, g) = diag_quadratic(&w).unwrap();
            assert!(f <= last);
            last = f;
            w = gd_step(&w, &g, 0.15).unwrap();
        }
        assert!(last < 1e-6);
    }
}
