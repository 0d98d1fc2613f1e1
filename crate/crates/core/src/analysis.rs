//! Factor-specific reconstructions and environment divergence.
//!
//! A factor-specific reconstruction decodes a composed latent in which the
//! partitions not under study are replaced by averages. Divergence between
//! environments is measured per wavelength with Gaussian fits and a
//! symmetrized KL divergence.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::GenotypeGroup;
use crate::error::{Error, Result};
use crate::losses::correlation_matrix;
use crate::model::{decoder_forward, BoundParams, FusedLatent, ModelKind, ModelParams};
use crate::numcore::{Matrix, Tape};
use crate::optim::stack_groups;

/// Floor applied to fitted variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    GenotypeSpecific,
    MacroEnvSpecific,
    MicroEnvSpecific,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorReconstruction {
    pub kind: FactorKind,
    /// One row per reconstructed spectrum.
    pub spectra: Matrix,
    /// Which slices were replaced by averages.
    pub provenance: String,
    /// Differences against other factor reconstructions, labelled.
    pub differences: Vec<(String, Matrix)>,
}

/// Fused latents for every group, computed in one batched pass.
pub fn fuse_groups(params: &ModelParams, groups: &[GenotypeGroup]) -> Result<Vec<FusedLatent>> {
    if params.kind != ModelKind::Cae {
        return Err(Error::invalid("factor analysis needs a compositional model"));
    }
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let tape = Tape::new();
    let bound = BoundParams::bind(params, &tape);
    let x = tape.constant(stack_groups(groups));
    let fused = bound.fuse(&bound.encode(&x)?)?.value();
    (0..fused.rows())
        .map(|r| FusedLatent::new(params.layout, fused.row(r).to_vec()))
        .collect()
}

fn mean_of(slices: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; slices[0].len()];
    for s in slices {
        out.iter_mut().zip(s.iter()).for_each(|(o, v)| *o += v);
    }
    let n = slices.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Holds a trained compositional model and the dataset-wide mean genotype
/// slice used by the environment-specific reconstructions.
#[derive(Clone, Debug)]
pub struct FactorAnalyzer {
    params: ModelParams,
    mean_genotype: Vec<f64>,
}

impl FactorAnalyzer {
    pub fn new(params: ModelParams, groups: &[GenotypeGroup]) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::invalid("factor analysis needs at least one group"));
        }
        let fused = fuse_groups(&params, groups)?;
        let slices: Vec<&[f64]> = fused.iter().map(FusedLatent::genotype).collect();
        let mean_genotype = mean_of(&slices);
        Ok(FactorAnalyzer { params, mean_genotype })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn mean_genotype(&self) -> &[f64] {
        &self.mean_genotype
    }

    fn fused(&self, group: &GenotypeGroup) -> Result<FusedLatent> {
        let layout = &self.params.layout;
        if group.plants.len() != layout.plants() {
            return Err(Error::invalid(format!(
                "group {} has {} plants, the layout needs {}",
                group.genotype,
                group.plants.len(),
                layout.plants()
            )));
        }
        Ok(fuse_groups(&self.params, std::slice::from_ref(group))?.remove(0))
    }

    fn decode(&self, rows: Vec<Vec<f64>>) -> Result<Matrix> {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        decoder_forward(&self.params, &Matrix::from_rows(&refs)?)
    }

    fn mean_env(&self, f: &FusedLatent) -> Vec<f64> {
        let s: Vec<&[f64]> = (0..self.params.layout.envs).map(|j| f.env(j)).collect();
        mean_of(&s)
    }

    fn mean_plant(&self, f: &FusedLatent) -> Vec<f64> {
        let s: Vec<&[f64]> = (0..self.params.layout.plants()).map(|i| f.plant(i)).collect();
        mean_of(&s)
    }

    fn genotype_row(&self, f: &FusedLatent) -> Vec<f64> {
        [f.genotype(), &self.mean_env(f), &self.mean_plant(f)].concat()
    }

    fn macro_row(&self, f: &FusedLatent, env: usize) -> Vec<f64> {
        [&self.mean_genotype[..], f.env(env), &self.mean_plant(f)].concat()
    }

    /// `[zg | mean env | mean plant]` decoded once per plant, P×D.
    pub fn genotype_specific(&self, group: &GenotypeGroup) -> Result<FactorReconstruction> {
        let f = self.fused(group)?;
        let row = self.genotype_row(&f);
        let spectra = self.decode(vec![row; self.params.layout.plants()])?;
        Ok(FactorReconstruction {
            kind: FactorKind::GenotypeSpecific,
            spectra,
            provenance: "env slices and plant slices replaced by their group means".into(),
            differences: Vec::new(),
        })
    }

    /// `[dataset mean zg | env_j | mean plant]`, 1×D, with its difference
    /// from the genotype-specific spectrum.
    pub fn macro_env_specific(&self, group: &GenotypeGroup, env: usize) -> Result<FactorReconstruction> {
        let layout = &self.params.layout;
        if env >= layout.envs {
            return Err(Error::Index {
                op: "macro_env_specific",
                index: env,
                limit: layout.envs,
            });
        }
        let f = self.fused(group)?;
        let both = self.decode(vec![self.macro_row(&f, env), self.genotype_row(&f)])?;
        let spectra = both.select_rows(&[0]);
        let diff = spectra.sub(&both.select_rows(&[1]))?;
        Ok(FactorReconstruction {
            kind: FactorKind::MacroEnvSpecific,
            spectra,
            provenance: format!("genotype slice replaced by dataset mean, plant slices by group mean, env {env} kept"),
            differences: vec![("minus_genotype_specific".into(), diff)],
        })
    }

    /// `[dataset mean zg | env of plant i | plant_i]`, 1×D, with differences
    /// from the genotype- and macro-environment-specific spectra.
    pub fn micro_env_specific(&self, group: &GenotypeGroup, plant: usize) -> Result<FactorReconstruction> {
        let layout = &self.params.layout;
        if plant >= layout.plants() {
            return Err(Error::Index {
                op: "micro_env_specific",
                index: plant,
                limit: layout.plants(),
            });
        }
        let f = self.fused(group)?;
        let env = layout.env_of(plant);
        let micro = [&self.mean_genotype[..], f.env(env), f.plant(plant)].concat();
        let all = self.decode(vec![micro, self.genotype_row(&f), self.macro_row(&f, env)])?;
        let spectra = all.select_rows(&[0]);
        let vs_genotype = spectra.sub(&all.select_rows(&[1]))?;
        let vs_macro = spectra.sub(&all.select_rows(&[2]))?;
        Ok(FactorReconstruction {
            kind: FactorKind::MicroEnvSpecific,
            spectra,
            provenance: format!("genotype slice replaced by dataset mean, env {env} and plant {plant} kept"),
            differences: vec![
                ("minus_genotype_specific".into(), vs_genotype),
                ("minus_macro_env_specific".into(), vs_macro),
            ],
        })
    }

    /// Macro-environment-specific spectra for every group, one matrix per
    /// environment (rows follow `groups`).
    pub fn macro_env_spectra(&self, groups: &[GenotypeGroup]) -> Result<Vec<Matrix>> {
        let fused = fuse_groups(&self.params, groups)?;
        (0..self.params.layout.envs)
            .map(|j| self.decode(fused.iter().map(|f| self.macro_row(f, j)).collect()))
            .collect()
    }
}

/// KL(N(mu0, var0) ‖ N(mu1, var1)).
pub fn gaussian_kl(mu0: f64, var0: f64, mu1: f64, var1: f64) -> Result<f64> {
    if !(var0 > 0.0 && var1 > 0.0) {
        return Err(Error::invalid(format!(
            "Gaussian KL needs positive variances, got {var0} and {var1}"
        )));
    }
    let d = mu0 - mu1;
    Ok(0.5 * (var1 / var0).ln() + (var0 + d * d) / (2.0 * var1) - 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub var: f64,
}

/// Per-wavelength comparison of two environments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDivergence {
    /// `fits[e][w]` for environment `e`, wavelength `w`.
    pub fits: Vec<Vec<GaussianFit>>,
    pub kl_forward: Vec<f64>,
    pub kl_backward: Vec<f64>,
    pub symmetric: Vec<f64>,
    pub mean: f64,
}

fn fit_columns(samples: &Matrix) -> Vec<GaussianFit> {
    let n = samples.rows() as f64;
    (0..samples.cols())
        .map(|c| {
            let col = samples.column(c);
            let mu = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
            GaussianFit {
                mu,
                var: var.max(VARIANCE_FLOOR),
            }
        })
        .collect()
}

/// Fits a Gaussian per wavelength to each environment's samples (rows) and
/// averages the symmetrized KL of the first two environments.
pub fn env_divergence(by_env: &[Matrix]) -> Result<EnvDivergence> {
    if by_env.len() < 2 {
        return Err(Error::invalid("divergence needs two environments"));
    }
    let width = by_env[0].cols();
    for m in by_env {
        if m.rows() < 2 {
            return Err(Error::invalid(format!(
                "each environment needs at least 2 samples, got {}",
                m.rows()
            )));
        }
        if m.cols() != width {
            return Err(Error::Shape {
                op: "env_divergence",
                left: by_env[0].shape(),
                right: m.shape(),
            });
        }
    }
    let fits: Vec<Vec<GaussianFit>> = by_env.iter().map(fit_columns).collect();
    let mut kl_forward = Vec::with_capacity(width);
    let mut kl_backward = Vec::with_capacity(width);
    for (a, b) in fits[0].iter().zip(&fits[1]) {
        kl_forward.push(gaussian_kl(a.mu, a.var, b.mu, b.var)?);
        kl_backward.push(gaussian_kl(b.mu, b.var, a.mu, a.var)?);
    }
    let symmetric: Vec<f64> = kl_forward.iter().zip(&kl_backward).map(|(f, b)| 0.5 * (f + b)).collect();
    let mean = symmetric.iter().sum::<f64>() / width.max(1) as f64;
    Ok(EnvDivergence {
        fits,
        kl_forward,
        kl_backward,
        symmetric,
        mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDivergenceReport {
    pub original: EnvDivergence,
    pub disentangled: EnvDivergence,
}

/// Original spectra grouped by environment (all replicates).
pub fn original_env_spectra(groups: &[GenotypeGroup], envs: usize) -> Result<Vec<Matrix>> {
    (0..envs)
        .map(|j| {
            let rows: Vec<&[f64]> = groups
                .iter()
                .flat_map(|g| g.plants.iter().filter(|p| p.env == j).map(|p| p.reflectance.as_slice()))
                .collect();
            if rows.is_empty() {
                return Err(Error::invalid(format!("no plants in environment {j}")));
            }
            Matrix::from_rows(&rows)
        })
        .collect()
}

/// Divergence between environments on the input spectra and on the
/// macro-environment-specific reconstructions.
pub fn env_divergence_report(analyzer: &FactorAnalyzer, groups: &[GenotypeGroup]) -> Result<EnvDivergenceReport> {
    let envs = analyzer.params().layout.envs;
    let original = env_divergence(&original_env_spectra(groups, envs)?)?;
    let disentangled = env_divergence(&analyzer.macro_env_spectra(groups)?)?;
    Ok(EnvDivergenceReport { original, disentangled })
}

/// Writes `wavelength,env,mu,var`.
pub fn write_densities<W: Write>(w: W, div: &EnvDivergence) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["wavelength", "env", "mu", "var"])?;
    let width = div.fits.first().map_or(0, Vec::len);
    for wl in 0..width {
        for (env, fits) in div.fits.iter().enumerate() {
            let f = fits[wl];
            out.write_record([wl.to_string(), env.to_string(), f.mu.to_string(), f.var.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io(Path::new("<densities>"), e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub mean_abs: f64,
    pub max_abs: f64,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCorrReport {
    pub matrix: Matrix,
    /// Partition of each fused dimension: 0 genotype, 1..=E env, then plants.
    pub labels: Vec<usize>,
    pub overall: PartitionStats,
    pub within: PartitionStats,
    pub cross: PartitionStats,
}

fn stats(values: &[f64]) -> PartitionStats {
    PartitionStats {
        mean_abs: if values.is_empty() {
            0.0
        } else {
            values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64
        },
        max_abs: values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        pairs: values.len(),
    }
}

/// Correlation of the fused latents across `groups`.
pub fn latent_corr_report(params: &ModelParams, groups: &[GenotypeGroup]) -> Result<LatentCorrReport> {
    let fused = fuse_groups(params, groups)?;
    if fused.len() < 2 {
        return Err(Error::invalid("correlation report needs at least 2 groups"));
    }
    let rows: Vec<&[f64]> = fused.iter().map(|f| f.values.as_slice()).collect();
    let matrix = correlation_matrix(&Matrix::from_rows(&rows)?)?;
    let labels = params.layout.partition_labels();
    let (mut all, mut within, mut cross) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let r = matrix.get(i, j);
            all.push(r);
            if labels[i] == labels[j] {
                within.push(r);
            } else {
                cross.push(r);
            }
        }
    }
    Ok(LatentCorrReport {
        overall: stats(&all),
        within: stats(&within),
        cross: stats(&cross),
        matrix,
        labels,
    })
}
