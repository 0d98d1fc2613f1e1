//! Seeded G×E spectra with known factors.
//!
//! Every plot is `clip01(B_g·g + B_e·e + B_p·p + 0.5)` where the basis
//! matrices are smooth sums of Gaussian bumps along the wavelength axis, `g`
//! is drawn once per genotype, `e` once per environment and `p` once per plot.
//! By default `B_p` reuses the columns of `B_g`, so plot-level noise moves the
//! same spectral features as the genotype and only pooling replicates
//! separates the two.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, SpectraRecord};
use crate::error::{Error, Result};

pub const GENOTYPE_TRAIT: &str = "synthetic_trait";
pub const MIXED_TRAIT: &str = "mixed_trait";

/// Bumps summed into each basis column.
const BUMPS_PER_COLUMN: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub genotypes: usize,
    pub envs: usize,
    pub reps: usize,
    pub wavelengths: usize,
    pub genotype_dim: usize,
    pub env_dim: usize,
    pub plant_dim: usize,
    pub genotype_scale: f64,
    pub env_scale: f64,
    pub plant_scale: f64,
    /// Build `B_p` from the columns of `B_g` (cycled) instead of a fresh basis.
    pub shared_plant_basis: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            genotypes: 100,
            envs: 2,
            reps: 2,
            wavelengths: 128,
            genotype_dim: 4,
            env_dim: 2,
            plant_dim: 4,
            genotype_scale: 0.08,
            env_scale: 0.08,
            plant_scale: 0.08,
            shared_plant_basis: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("genotypes", self.genotypes),
            ("envs", self.envs),
            ("reps", self.reps),
            ("genotype_dim", self.genotype_dim),
            ("env_dim", self.env_dim),
            ("plant_dim", self.plant_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.wavelengths < 8 {
            return Err(Error::invalid(format!(
                "wavelengths must be at least 8, got {}",
                self.wavelengths
            )));
        }
        for (name, v) in [
            ("genotype_scale", self.genotype_scale),
            ("env_scale", self.env_scale),
            ("plant_scale", self.plant_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Factors and weights behind a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub config: SyntheticConfig,
    /// One vector per genotype, in genotype-id order.
    pub genotype_factors: Vec<Vec<f64>>,
    pub env_factors: Vec<Vec<f64>>,
    /// One vector per record, in record order.
    pub plant_factors: Vec<Vec<f64>>,
    /// `synthetic_trait = genotype_weights · g`.
    pub genotype_weights: Vec<f64>,
    /// `mixed_trait = mixed_genotype_weights · g + mixed_env_weights · e`.
    pub mixed_genotype_weights: Vec<f64>,
    pub mixed_env_weights: Vec<f64>,
}

/// D×k basis whose columns are smooth, peak-normalized bump mixtures.
fn smooth_basis(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Vec<Vec<f64>> {
    let span = d as f64;
    (0..k)
        .map(|_| {
            let bumps: Vec<(f64, f64, f64)> = (0..BUMPS_PER_COLUMN)
                .map(|_| {
                    let center = rng.random_range(0.0..span);
                    let width = rng.random_range(span / 20.0..span / 6.0);
                    let amp = rng.random_range(-1.0..1.0);
                    (center, width, amp)
                })
                .collect();
            let mut col: Vec<f64> = (0..d)
                .map(|w| {
                    bumps
                        .iter()
                        .map(|(c, s, a)| a * (-0.5 * ((w as f64 - c) / s).powi(2)).exp())
                        .sum()
                })
                .collect();
            let peak = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.0 {
                col.iter_mut().for_each(|v| *v /= peak);
            }
            col
        })
        .collect()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn project(basis: &[Vec<f64>], coeffs: &[f64], w: usize) -> f64 {
    basis.iter().zip(coeffs).map(|(col, c)| col[w] * c).sum()
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, SyntheticGroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.wavelengths;
    let basis_g = smooth_basis(&mut rng, d, cfg.genotype_dim);
    let basis_e = smooth_basis(&mut rng, d, cfg.env_dim);
    let basis_p = if cfg.shared_plant_basis {
        (0..cfg.plant_dim).map(|k| basis_g[k % cfg.genotype_dim].clone()).collect()
    } else {
        smooth_basis(&mut rng, d, cfg.plant_dim)
    };

    let genotype_weights = normal_vec(&mut rng, cfg.genotype_dim, 1.0);
    let mixed_genotype_weights = normal_vec(&mut rng, cfg.genotype_dim, 1.0);
    let mixed_env_weights = normal_vec(&mut rng, cfg.env_dim, 1.0);

    let genotype_factors: Vec<Vec<f64>> = (0..cfg.genotypes)
        .map(|_| normal_vec(&mut rng, cfg.genotype_dim, cfg.genotype_scale))
        .collect();
    let env_factors: Vec<Vec<f64>> = (0..cfg.envs)
        .map(|_| normal_vec(&mut rng, cfg.env_dim, cfg.env_scale))
        .collect();

    let width = format!("{}", cfg.genotypes.saturating_sub(1)).len().max(4);
    let dotp = |w: &[f64], x: &[f64]| -> f64 { w.iter().zip(x).map(|(a, b)| a * b).sum() };
    let mut records = Vec::with_capacity(cfg.genotypes * cfg.envs * cfg.reps);
    let mut plant_factors = Vec::with_capacity(records.capacity());
    for (gi, g) in genotype_factors.iter().enumerate() {
        let genotype = format!("G{gi:0width$}");
        for (ei, e) in env_factors.iter().enumerate() {
            for rep in 0..cfg.reps {
                let p = normal_vec(&mut rng, cfg.plant_dim, cfg.plant_scale);
                let reflectance = (0..d)
                    .map(|w| {
                        let v = project(&basis_g, g, w) + project(&basis_e, e, w) + project(&basis_p, &p, w) + 0.5;
                        v.clamp(0.0, 1.0)
                    })
                    .collect();
                let mut traits = BTreeMap::new();
                traits.insert(GENOTYPE_TRAIT.to_string(), dotp(&genotype_weights, g));
                traits.insert(
                    MIXED_TRAIT.to_string(),
                    dotp(&mixed_genotype_weights, g) + dotp(&mixed_env_weights, e),
                );
                records.push(SpectraRecord {
                    genotype: genotype.clone(),
                    env: ei,
                    rep,
                    reflectance,
                    traits,
                });
                plant_factors.push(p);
            }
        }
    }
    let data = Dataset {
        records,
        wavelengths: d,
        trait_names: vec![GENOTYPE_TRAIT.to_string(), MIXED_TRAIT.to_string()],
    };
    let truth = SyntheticGroundTruth {
        config: cfg.clone(),
        genotype_factors,
        env_factors,
        plant_factors,
        genotype_weights,
        mixed_genotype_weights,
        mixed_env_weights,
    };
    Ok((data, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::group_by_genotype;

    #[test]
    fn counts() {
        let cfg = SyntheticConfig {
            genotypes: 100,
            wavelengths: 32,
            ..Default::default()
        };
        let (d, truth) = generate_synthetic(&cfg).unwrap();
        assert_eq!(d.len(), 400);
        assert_eq!(truth.plant_factors.len(), 400);
        assert_eq!(group_by_genotype(&d.records, 2, 2).groups.len(), 100);
        assert!(d
            .records
            .iter()
            .all(|r| r.reflectance.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn noiseless_replicates_match() {
        let cfg = SyntheticConfig {
            genotypes: 5,
            envs: 1,
            reps: 2,
            wavelengths: 16,
            env_scale: 0.0,
            plant_scale: 0.0,
            ..Default::default()
        };
        let (d, _) = generate_synthetic(&cfg).unwrap();
        for pair in d.records.chunks(2) {
            assert_eq!(pair[0].reflectance, pair[1].reflectance);
        }
    }

    #[test]
    fn genotype_trait_is_shared_within_group() {
        let (d, _) = generate_synthetic(&SyntheticConfig {
            genotypes: 10,
            wavelengths: 16,
            ..Default::default()
        })
        .unwrap();
        for g in group_by_genotype(&d.records, 2, 2).groups {
            let t0 = g.plants[0].traits[GENOTYPE_TRAIT];
            assert!(g.plants.iter().all(|p| p.traits[GENOTYPE_TRAIT] == t0));
        }
    }

    #[test]
    fn shared_basis_keeps_plots_in_genotype_span() {
        // env off, one plant factor: each plot is the genotype curve shifted along B_g[0]
        let cfg = SyntheticConfig {
            genotypes: 4,
            envs: 1,
            wavelengths: 32,
            genotype_dim: 1,
            plant_dim: 1,
            env_scale: 0.0,
            genotype_scale: 0.02,
            plant_scale: 0.02,
            ..Default::default()
        };
        let (d, truth) = generate_synthetic(&cfg).unwrap();
        for (i, r) in d.records.iter().enumerate() {
            let coeff = truth.genotype_factors[i / 2][0] + truth.plant_factors[i][0];
            let first = &d.records[0];
            let c0 = truth.genotype_factors[0][0] + truth.plant_factors[0][0];
            for w in 0..32 {
                let a = r.reflectance[w] - 0.5;
                let b = first.reflectance[w] - 0.5;
                assert!((a * c0 - b * coeff).abs() < 1e-12);
            }
        }
        let own = SyntheticConfig {
            shared_plant_basis: false,
            ..cfg
        };
        assert_ne!(generate_synthetic(&own).unwrap().0, d);
    }

    #[test]
    fn seeded_and_validated() {
        let cfg = SyntheticConfig {
            genotypes: 3,
            wavelengths: 16,
            seed: 11,
            ..Default::default()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let bad = SyntheticConfig { envs: 0, ..cfg.clone() };
        assert!(generate_synthetic(&bad).is_err());
        let short = SyntheticConfig { wavelengths: 7, ..cfg };
        assert!(generate_synthetic(&short).is_err());
    }
}
