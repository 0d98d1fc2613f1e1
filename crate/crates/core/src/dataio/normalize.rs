use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// The single global min/max pair used to scale a whole dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: f64,
    pub max: f64,
}

impl NormalizationStats {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }
}

/// Scales every reflectance value by one dataset-wide min and max, so the
/// output spans exactly [0, 1].
pub fn minmax_normalize(data: &Dataset) -> Result<(Dataset, NormalizationStats)> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in data.records.iter().flat_map(|r| &r.reflectance) {
        min = min.min(*v);
        max = max.max(*v);
    }
    if !(max > min) {
        return Err(Error::Degenerate(format!(
            "reflectance range is empty (min {min}, max {max})"
        )));
    }
    let stats = NormalizationStats { min, max };
    let mut out = data.clone();
    for r in &mut out.records {
        for v in &mut r.reflectance {
            *v = stats.apply(*v).clamp(0.0, 1.0);
        }
    }
    Ok((out, stats))
}
