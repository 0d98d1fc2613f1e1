use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SpectraRecord;
use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// All plants of one genotype, ordered by (env, rep): plant `i` grew in
/// environment `i / reps`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenotypeGroup {
    pub genotype: String,
    pub plants: Vec<SpectraRecord>,
}

impl GenotypeGroup {
    /// Spectra as a P×D matrix in plant order.
    pub fn spectra(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.plants.iter().map(|p| p.reflectance.as_slice()).collect();
        Matrix::from_rows(&rows).expect("records of one dataset share a width")
    }
}

#[derive(Clone, Debug, Default)]
pub struct Grouping {
    pub groups: Vec<GenotypeGroup>,
    /// Genotypes dropped because their (env, rep) design was incomplete.
    pub excluded: Vec<String>,
}

/// Collects complete E×N groups, sorted by genotype id.
pub fn group_by_genotype(records: &[SpectraRecord], envs: usize, reps: usize) -> Grouping {
    let plants = envs * reps;
    let mut by_genotype: BTreeMap<&str, Vec<Option<&SpectraRecord>>> = BTreeMap::new();
    let mut invalid: BTreeMap<&str, ()> = BTreeMap::new();
    for r in records {
        let slots = by_genotype
            .entry(r.genotype.as_str())
            .or_insert_with(|| vec![None; plants]);
        if r.env >= envs || r.rep >= reps {
            invalid.insert(r.genotype.as_str(), ());
            continue;
        }
        slots[r.env * reps + r.rep] = Some(r);
    }
    let mut out = Grouping::default();
    for (genotype, slots) in by_genotype {
        if plants == 0 || invalid.contains_key(genotype) || slots.iter().any(Option::is_none) {
            out.excluded.push(genotype.to_string());
            continue;
        }
        out.groups.push(GenotypeGroup {
            genotype: genotype.to_string(),
            plants: slots.into_iter().flatten().cloned().collect(),
        });
    }
    out
}

/// Zeroed column indices per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub columns: Vec<Vec<usize>>,
}

impl Mask {
    pub fn is_empty(&self) -> bool {
        self.columns.iter().all(Vec::is_empty)
    }
}

/// Zeroes ⌊fraction·D⌋ distinct columns in every row.
pub fn apply_mask(batch: &Matrix, fraction: f64, seed: u64) -> Result<(Matrix, Mask)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "mask fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let d = batch.cols();
    let count = (fraction * d as f64).floor() as usize;
    let mut out = batch.clone();
    let mut columns = Vec::with_capacity(batch.rows());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..batch.rows() {
        if count == 0 {
            columns.push(Vec::new());
            continue;
        }
        let mut cols = index::sample(&mut rng, d, count).into_vec();
        cols.sort_unstable();
        let row = out.row_mut(r);
        for &c in &cols {
            row[c] = 0.0;
        }
        columns.push(cols);
    }
    Ok((out, Mask { columns }))
}

/// Seeded split at genotype-group granularity. The validation share is
/// `round(n · val_fraction)`, kept within [1, n − 1].
pub fn train_val_split<T: Clone>(groups: &[T], val_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let n = groups.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 groups to split, got {n}")));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| groups[i].clone()).collect(),
        val_idx.iter().map(|&i| groups[i].clone()).collect(),
    ))
}
