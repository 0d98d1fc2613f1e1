use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolfeParams {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub alpha_max: f64,
    pub max_evals: usize,
    /// Spend one extra evaluation at the cubic minimizer through the origin
    /// and an accepted step, keeping it if it is lower and still acceptable.
    pub refine: bool,
}

impl Default for WolfeParams {
    fn default() -> Self {
        WolfeParams {
            c1: 1e-4,
            c2: 0.9,
            alpha_max: 1e10,
            max_evals: 50,
            refine: true,
        }
    }
}

impl WolfeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::invalid(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if !(self.alpha_max > 0.0) || self.max_evals == 0 {
            return Err(Error::invalid("alpha_max and max_evals must be positive"));
        }
        Ok(())
    }

    pub fn armijo(&self, f0: f64, slope0: f64, alpha: f64, f_alpha: f64) -> bool {
        f_alpha <= f0 + self.c1 * alpha * slope0
    }

    /// |∇f(w+αp)ᵀp| ≤ c2·|∇f(w)ᵀp|
    pub fn strong_curvature(&self, slope0: f64, slope_alpha: f64) -> bool {
        slope_alpha.abs() <= -self.c2 * slope0
    }
}

/// Outcome of one line search.
#[derive(Clone, Debug)]
pub struct LineSearch {
    pub alpha: f64,
    pub f: f64,
    pub grad: Vec<f64>,
    pub evals: usize,
    /// Both strong Wolfe conditions hold at `alpha`. When false, `alpha` is
    /// the best sufficient-decrease point seen (possibly 0).
    pub satisfied: bool,
}

struct Trial {
    alpha: f64,
    f: f64,
    slope: f64,
    grad: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bracketing + zoom search for a step satisfying the strong Wolfe
/// conditions along descent direction `p`.
pub fn wolfe_line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    p: &[f64],
    alpha_init: f64,
    params: &WolfeParams,
) -> Result<LineSearch>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let slope0 = dot(g0, p);
    if !(slope0 < 0.0) {
        return Err(Error::invalid(format!(
            "line search direction is not a descent direction (slope {slope0})"
        )));
    }
    let mut evals = 0;
    let mut trial_at = |alpha: f64, evals: &mut usize| -> Result<Trial> {
        let xt: Vec<f64> = x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect();
        let (f, grad) = objective(&xt)?;
        *evals += 1;
        Ok(Trial {
            alpha,
            f,
            slope: dot(&grad, p),
            grad,
        })
    };

    let origin = Trial {
        alpha: 0.0,
        f: f0,
        slope: slope0,
        grad: g0.to_vec(),
    };
    let mut prev = origin;
    let mut alpha = alpha_init.clamp(f64::MIN_POSITIVE, params.alpha_max);
    let mut first = true;

    while evals < params.max_evals {
        let cur = trial_at(alpha, &mut evals)?;
        if !cur.f.is_finite() || !params.armijo(f0, slope0, cur.alpha, cur.f) || (!first && cur.f >= prev.f) {
            return zoom(&mut trial_at, prev, cur, f0, slope0, params, evals);
        }
        if params.strong_curvature(slope0, cur.slope) {
            let origin = Trial {
                alpha: 0.0,
                f: f0,
                slope: slope0,
                grad: Vec::new(),
            };
            return refine(&mut trial_at, &origin, cur, f0, slope0, params, evals);
        }
        if cur.slope >= 0.0 {
            return zoom(&mut trial_at, cur, prev, f0, slope0, params, evals);
        }
        if cur.alpha >= params.alpha_max {
            // sufficient decrease holds all the way out; the curvature
            // condition cannot be met inside the allowed interval
            return Ok(done(cur, evals, false));
        }
        first = false;
        alpha = (2.0 * cur.alpha).min(params.alpha_max);
        prev = cur;
    }
    Ok(done(prev, evals, false))
}

fn done(t: Trial, evals: usize, satisfied: bool) -> LineSearch {
    LineSearch {
        alpha: t.alpha,
        f: t.f,
        grad: t.grad,
        evals,
        satisfied,
    }
}

/// `lo` always satisfies sufficient decrease and has the lowest value seen.
fn zoom<T>(
    trial_at: &mut T,
    mut lo: Trial,
    mut hi: Trial,
    f0: f64,
    slope0: f64,
    params: &WolfeParams,
    mut evals: usize,
) -> Result<LineSearch>
where
    T: FnMut(f64, &mut usize) -> Result<Trial>,
{
    while evals < params.max_evals {
        let width = (hi.alpha - lo.alpha).abs();
        if width <= 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let alpha = interpolate(&lo, &hi);
        let cur = trial_at(alpha, &mut evals)?;
        if !cur.f.is_finite() || !params.armijo(f0, slope0, cur.alpha, cur.f) || cur.f >= lo.f {
            hi = cur;
        } else {
            if params.strong_curvature(slope0, cur.slope) {
                let origin = Trial {
                    alpha: 0.0,
                    f: f0,
                    slope: slope0,
                    grad: Vec::new(),
                };
                return refine(trial_at, &origin, cur, f0, slope0, params, evals);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    Ok(done(lo, evals, false))
}

/// Tries the cubic minimizer through `origin` and the accepted `cur`.
fn refine<T>(
    trial_at: &mut T,
    origin: &Trial,
    cur: Trial,
    f0: f64,
    slope0: f64,
    params: &WolfeParams,
    mut evals: usize,
) -> Result<LineSearch>
where
    T: FnMut(f64, &mut usize) -> Result<Trial>,
{
    if !params.refine || evals >= params.max_evals {
        return Ok(done(cur, evals, true));
    }
    let Some(c) = cubic_min(origin, &cur) else {
        return Ok(done(cur, evals, true));
    };
    if !(c > 0.0 && c <= params.alpha_max) || (c - cur.alpha).abs() <= 1e-3 * cur.alpha {
        return Ok(done(cur, evals, true));
    }
    let alt = trial_at(c, &mut evals)?;
    let better = alt.f.is_finite()
        && alt.f < cur.f
        && params.armijo(f0, slope0, alt.alpha, alt.f)
        && params.strong_curvature(slope0, alt.slope);
    Ok(done(if better { alt } else { cur }, evals, true))
}

/// Minimizer of the cubic matching values and slopes at both trials.
fn cubic_min(lo: &Trial, hi: &Trial) -> Option<f64> {
    let (a, b) = (lo.alpha, hi.alpha);
    if !hi.f.is_finite() || !hi.slope.is_finite() || a == b {
        return None;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = hi.slope - lo.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let c = b - (b - a) * (hi.slope + d2 - d1) / denom;
    c.is_finite().then_some(c)
}

/// Cubic interpolation safeguarded to the inner 80% of the bracket.
fn interpolate(lo: &Trial, hi: &Trial) -> f64 {
    let (left, right) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
    let margin = 0.1 * (right - left);
    match cubic_min(lo, hi) {
        Some(c) if c >= left + margin && c <= right - margin => c,
        _ => 0.5 * (lo.alpha + hi.alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((x[0] * x[0], vec![2.0 * x[0]]))
    }

    #[test]
    fn quadratic_step_satisfies_both_conditions() {
        let params = WolfeParams::default();
        let x = [1.0];
        let (f0, g0) = quad(&x).unwrap();
        let p = [-2.0];
        for init in [0.01, 0.3, 1.0, 4.0] {
            let ls = wolfe_line_search(&mut quad, &x, f0, &g0, &p, init, &params).unwrap();
            assert!(ls.satisfied);
            let xa = [x[0] + ls.alpha * p[0]];
            let (fa, ga) = quad(&xa).unwrap();
            let slope0 = g0[0] * p[0];
            assert!(fa <= f0 + params.c1 * ls.alpha * slope0);
            assert!((ga[0] * p[0]).abs() <= params.c2 * slope0.abs());
            assert!(ga[0] * p[0] >= params.c2 * slope0);
        }
    }

    #[test]
    fn linear_descent_caps_at_alpha_max() {
        let mut lin = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((-3.0 * x[0], vec![-3.0])) };
        for alpha_max in [10.0, WolfeParams::default().alpha_max] {
            let params = WolfeParams {
                alpha_max,
                ..Default::default()
            };
            let ls = wolfe_line_search(&mut lin, &[0.0], 0.0, &[-3.0], &[1.0], 1.0, &params).unwrap();
            assert_eq!(ls.alpha, alpha_max);
            assert!(!ls.satisfied);
            assert!(params.armijo(0.0, -3.0, ls.alpha, ls.f));
        }
    }

    #[test]
    fn tiny_direction_expands_until_curvature_holds() {
        // steepest descent on a unit quadratic, scaled down so α = 1 barely moves
        let mut q = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((0.5 * x[0] * x[0], vec![x[0]])) };
        let params = WolfeParams::default();
        let ls = wolfe_line_search(&mut q, &[1.0], 0.5, &[1.0], &[-1e-3], 1.0, &params).unwrap();
        assert!(ls.satisfied);
        assert!(ls.alpha > 10.0);
    }

    #[test]
    fn rejects_ascent_direction() {
        let err = wolfe_line_search(&mut quad, &[1.0], 1.0, &[2.0], &[1.0], 1.0, &WolfeParams::default());
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn constants_validated() {
        let bad = WolfeParams {
            c1: 0.9,
            c2: 0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        WolfeParams::default().validate().unwrap();
    }
}
