//! Trait prediction from spectra or learned features.

mod gbt;
mod linear;
mod pca;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gbt::{gbt_fit, GbtModel, GbtParams, Tree};
pub use linear::{plsr_fit, ridge_fit, LinearModel, PlsModel, DEFAULT_RIDGE_ALPHA};
pub use pca::{pca_fit, Pca};

use crate::analysis::fuse_groups;
use crate::dataio::{group_by_genotype, Dataset};
use crate::error::{Error, Result};
use crate::model::{compose_latent, encoder_forward, ModelKind, ModelParams};
use crate::numcore::Matrix;

pub const DEFAULT_PCA_COMPONENTS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Raw,
    RawPca,
    AeLatent,
    CaeComposed,
}

impl FeatureSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureSource::Raw => "raw",
            FeatureSource::RawPca => "raw_pca",
            FeatureSource::AeLatent => "ae_latent",
            FeatureSource::CaeComposed => "cae_composed",
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeatureSource::Raw),
            "raw_pca" => Ok(FeatureSource::RawPca),
            "ae_latent" => Ok(FeatureSource::AeLatent),
            "cae_composed" => Ok(FeatureSource::CaeComposed),
            other => Err(Error::invalid(format!(
                "unknown feature source `{other}` (expected raw, raw_pca, ae_latent or cae_composed)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub genotype: String,
    pub env: usize,
    pub rep: usize,
}

/// One feature row per plot.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub features: Matrix,
    pub source: FeatureSource,
    pub keys: Vec<RowKey>,
}

impl FeatureTable {
    /// Values of `name` for each row, in row order.
    pub fn trait_values(&self, data: &Dataset, name: &str) -> Result<Vec<f64>> {
        let lookup: BTreeMap<(&str, usize, usize), f64> = data
            .records
            .iter()
            .filter_map(|r| r.traits.get(name).map(|v| (r.key(), *v)))
            .collect();
        self.keys
            .iter()
            .map(|k| {
                lookup
                    .get(&(k.genotype.as_str(), k.env, k.rep))
                    .copied()
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "trait `{name}` missing for {} env {} rep {}",
                            k.genotype, k.env, k.rep
                        ))
                    })
            })
            .collect()
    }
}

fn key_of(r: &crate::dataio::SpectraRecord) -> RowKey {
    RowKey {
        genotype: r.genotype.clone(),
        env: r.env,
        rep: r.rep,
    }
}

fn raw_matrix(data: &Dataset) -> Result<Matrix> {
    if data.is_empty() {
        return Err(Error::invalid("dataset has no records"));
    }
    let rows: Vec<&[f64]> = data.records.iter().map(|r| r.reflectance.as_slice()).collect();
    Matrix::from_rows(&rows)
}

/// Builds features of `source`. Learned sources need matching params;
/// `cae_composed` covers only genotypes with a complete design.
pub fn extract_features(
    source: FeatureSource,
    params: Option<&ModelParams>,
    data: &Dataset,
    pca_components: usize,
) -> Result<FeatureTable> {
    let need = |kind: ModelKind| -> Result<&ModelParams> {
        match params {
            Some(p) if p.kind == kind => Ok(p),
            Some(p) => Err(Error::invalid(format!("{source} features need a {kind} model, got {}", p.kind))),
            None => Err(Error::invalid(format!("{source} features need trained model parameters"))),
        }
    };
    let keys = || data.records.iter().map(key_of).collect();
    match source {
        FeatureSource::Raw => Ok(FeatureTable {
            features: raw_matrix(data)?,
            source,
            keys: keys(),
        }),
        FeatureSource::RawPca => {
            let x = raw_matrix(data)?;
            let pca = pca_fit(&x, pca_components)?;
            Ok(FeatureTable {
                features: pca.transform(&x)?,
                source,
                keys: keys(),
            })
        }
        FeatureSource::AeLatent => {
            let p = need(ModelKind::Vanilla)?;
            Ok(FeatureTable {
                features: encoder_forward(p, &raw_matrix(data)?)?,
                source,
                keys: keys(),
            })
        }
        FeatureSource::CaeComposed => {
            let p = need(ModelKind::Cae)?;
            let groups = group_by_genotype(&data.records, p.layout.envs, p.layout.reps).groups;
            if groups.is_empty() {
                return Err(Error::invalid("no genotype has a complete environment/replicate design"));
            }
            let fused = fuse_groups(p, &groups)?;
            let mut rows = Vec::with_capacity(groups.len() * p.layout.plants());
            let mut keys = Vec::with_capacity(rows.capacity());
            for (g, f) in groups.iter().zip(&fused) {
                for (i, plant) in g.plants.iter().enumerate() {
                    rows.push(compose_latent(f, i)?.values);
                    keys.push(key_of(plant));
                }
            }
            Ok(FeatureTable {
                features: Matrix::from_rows(&rows)?,
                source,
                keys,
            })
        }
    }
}

/// Coefficient of determination.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape {
            op: "r2_score",
            left: (y_true.len(), 1),
            right: (y_pred.len(), 1),
        });
    }
    if y_true.len() < 2 {
        return Err(Error::invalid("R² needs at least 2 samples"));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Degenerate("R² is undefined for a constant target".into()));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Regressor {
    Ridge { alpha: f64 },
    Plsr { components: usize },
    Gbt(GbtParams),
}

impl Regressor {
    pub fn name(&self) -> &'static str {
        match self {
            Regressor::Ridge { .. } => "ridge",
            Regressor::Plsr { .. } => "plsr",
            Regressor::Gbt(_) => "gbt",
        }
    }

    pub fn hyperparameters(&self) -> String {
        match self {
            Regressor::Ridge { alpha } => format!("alpha={alpha}"),
            Regressor::Plsr { components } => format!("components={components}"),
            Regressor::Gbt(p) => format!(
                "max_depth={} n_estimators={} learning_rate={}",
                p.max_depth, p.n_estimators, p.learning_rate
            ),
        }
    }

    pub fn fit_predict(&self, x: &Matrix, y: &[f64], test: &Matrix) -> Result<Vec<f64>> {
        match self {
            Regressor::Ridge { alpha } => ridge_fit(x, y, *alpha)?.predict(test),
            Regressor::Plsr { components } => plsr_fit(x, y, *components)?.predict(test),
            Regressor::Gbt(p) => Ok(gbt_fit(x, y, p)?.predict(test)),
        }
    }
}

/// Fold index of each row. Genotypes are shuffled with `seed` and dealt
/// into `k` contiguous, near-equal blocks, so a genotype never spans folds.
pub fn fold_assignment(keys: &[RowKey], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs k >= 2"));
    }
    let genotypes: BTreeSet<&str> = keys.iter().map(|k| k.genotype.as_str()).collect();
    if k > genotypes.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} distinct genotypes",
            genotypes.len()
        )));
    }
    let mut order: Vec<&str> = genotypes.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len();
    let fold_of: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, g)| (*g, i * k / n)).collect();
    Ok(keys.iter().map(|key| fold_of[key.genotype.as_str()]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub model: String,
    pub trait_name: String,
    pub hyperparameters: String,
    pub folds: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl FoldReport {
    pub fn new(model: &Regressor, trait_name: &str, folds: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&folds);
        FoldReport {
            model: model.name().into(),
            trait_name: trait_name.into(),
            hyperparameters: model.hyperparameters(),
            folds,
            mean,
            std,
        }
    }

    /// `mean (std)` with three decimals.
    pub fn summary(&self) -> String {
        format!("{:.3} ({:.3})", self.mean, self.std)
    }

    /// Writes `model,trait,fold,r2` rows and a closing summary row whose
    /// fold is `summary` and whose r2 cell holds `mean (std)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "trait", "fold", "r2"])?;
        for (i, r2) in self.folds.iter().enumerate() {
            out.write_record([self.model.clone(), self.trait_name.clone(), i.to_string(), r2.to_string()])?;
        }
        out.write_record([self.model.clone(), self.trait_name.clone(), "summary".into(), self.summary()])?;
        out.flush().map_err(|e| Error::io(Path::new("<fold report>"), e))?;
        Ok(())
    }
}

impl fmt::Display for FoldReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} & {} [{}]", self.summary(), self.model, self.trait_name)
    }
}

/// Genotype-grouped k-fold cross-validation of `model` on `y`.
pub fn kfold_cv(
    table: &FeatureTable,
    y: &[f64],
    trait_name: &str,
    model: &Regressor,
    k: usize,
    seed: u64,
) -> Result<FoldReport> {
    if y.len() != table.features.rows() {
        return Err(Error::Shape {
            op: "kfold_cv",
            left: table.features.shape(),
            right: (y.len(), 1),
        });
    }
    let folds = fold_assignment(&table.keys, k, seed)?;
    let mut scores = Vec::with_capacity(k);
    for fold in 0..k {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] == fold);
        let train_y: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let test_y: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();
        let pred = model.fit_predict(
            &table.features.select_rows(&train_idx),
            &train_y,
            &table.features.select_rows(&test_idx),
        )?;
        scores.push(r2_score(&test_y, &pred)?);
    }
    Ok(FoldReport::new(model, trait_name, scores))
}
