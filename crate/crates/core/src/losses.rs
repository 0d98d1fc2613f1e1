//! Reconstruction error, Pearson correlation over latent dimensions, and the
//! correlation penalty that pushes latent dimensions towards independence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Tape, Value};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub reconstruction: f64,
    pub correlation: f64,
    pub total: f64,
    pub correlation_weight: f64,
}

impl LossReport {
    pub fn new(reconstruction: f64, correlation: f64, correlation_weight: f64) -> Self {
        LossReport {
            reconstruction,
            correlation,
            total: reconstruction + correlation_weight * correlation,
            correlation_weight,
        }
    }
}

pub fn mse(prediction: &Matrix, target: &Matrix) -> Result<f64> {
    let diff = prediction.sub(target).map_err(|_| Error::Shape {
        op: "mse",
        left: prediction.shape(),
        right: target.shape(),
    })?;
    Ok(diff.data().iter().map(|v| v * v).sum::<f64>() / diff.len() as f64)
}

pub fn mse_value(prediction: &Value, target: &Value) -> Result<Value> {
    Ok(prediction.sub(target)?.square().mean())
}

/// Pearson coefficient with a flag for the zero-variance convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pearson {
    pub r: f64,
    /// Set when either input was constant; `r` is then 0.
    pub degenerate: bool,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            op: "pearson",
            left: (x.len(), 1),
            right: (y.len(), 1),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(format!("pearson needs at least 2 samples, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Pearson {
            r: 0.0,
            degenerate: true,
        });
    }
    Ok(Pearson {
        r: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// L×L correlation between the columns of a B×L batch.
pub fn correlation_matrix(latents: &Matrix) -> Result<Matrix> {
    let tape = Tape::new();
    Ok(tape.constant(latents.clone()).corr_matrix()?.value())
}

/// Σ_{i≤j} (|r_ij| − δ_ij), i.e. the summed absolute off-diagonal correlation.
pub fn correlation_loss(latents: &Matrix) -> Result<f64> {
    let tape = Tape::new();
    Ok(correlation_loss_value(&tape.constant(latents.clone()))?.item())
}

pub fn correlation_loss_value(latents: &Value) -> Result<Value> {
    latents.corr_matrix()?.triu_abs_sum()
}

/// Tape values of the combined objective.
pub struct LossTerms {
    pub total: Value,
    pub reconstruction: Value,
    pub correlation: Option<Value>,
    pub correlation_weight: f64,
}

impl LossTerms {
    pub fn report(&self) -> LossReport {
        LossReport::new(
            self.reconstruction.item(),
            self.correlation.as_ref().map_or(0.0, Value::item),
            self.correlation_weight,
        )
    }
}

/// MSE against the unmasked target plus `weight` × correlation loss over the
/// batch of fused latents. Passing `None` for the latents (or a zero weight)
/// leaves the penalty out of the graph.
pub fn total_loss_value(recon: &Value, target: &Value, fused: Option<&Value>, weight: f64) -> Result<LossTerms> {
    let reconstruction = mse_value(recon, target)?;
    let correlation = match fused {
        Some(f) => Some(correlation_loss_value(f)?),
        None => None,
    };
    let total = match &correlation {
        Some(c) if weight != 0.0 => reconstruction.add(&c.scale(weight))?,
        _ => reconstruction.clone(),
    };
    Ok(LossTerms {
        total,
        reconstruction,
        correlation,
        correlation_weight: weight,
    })
}

pub fn total_loss(recon: &Matrix, target: &Matrix, fused: &Matrix, weight: f64) -> Result<LossReport> {
    let reconstruction = mse(recon, target)?;
    let correlation = correlation_loss(fused)?;
    Ok(LossReport::new(reconstruction, correlation, weight))
}
