//! Dataset records, CSV ingestion, and the preprocessing steps that feed
//! training: global min-max scaling, genotype grouping, input masking and
//! group-level train/validation splits.

mod csvio;
mod group;
mod normalize;
mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use csvio::{load_csv, read_csv, write_csv, write_csv_to};
pub use group::{apply_mask, group_by_genotype, train_val_split, GenotypeGroup, Grouping, Mask};
pub use normalize::{minmax_normalize, NormalizationStats};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticGroundTruth, GENOTYPE_TRAIT, MIXED_TRAIT};

/// One plot: a reflectance spectrum with its design labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectraRecord {
    pub genotype: String,
    pub env: usize,
    pub rep: usize,
    pub reflectance: Vec<f64>,
    pub traits: BTreeMap<String, f64>,
}

impl SpectraRecord {
    pub fn key(&self) -> (&str, usize, usize) {
        (&self.genotype, self.env, self.rep)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<SpectraRecord>,
    /// Number of wavelength columns.
    pub wavelengths: usize,
    /// Trait columns in header order.
    pub trait_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest env id + 1 and largest rep id + 1 seen in the data.
    pub fn design(&self) -> (usize, usize) {
        let envs = self.records.iter().map(|r| r.env + 1).max().unwrap_or(0);
        let reps = self.records.iter().map(|r| r.rep + 1).max().unwrap_or(0);
        (envs, reps)
    }
}
