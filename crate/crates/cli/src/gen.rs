use std::path::PathBuf;

use clap::Args;

use gxe_cae::dataio::{generate_synthetic, write_csv, SyntheticConfig};

use crate::common::{create_dir, write_json};
use crate::error::Result;

/// Generate a seeded synthetic spectra table with known factors
#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 100)]
    genotypes: usize,
    #[arg(long, default_value_t = 2)]
    envs: usize,
    #[arg(long, default_value_t = 2)]
    reps: usize,
    #[arg(long, default_value_t = 128)]
    wavelengths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    genotype_dim: Option<usize>,
    #[arg(long)]
    env_dim: Option<usize>,
    #[arg(long)]
    plant_dim: Option<usize>,
    #[arg(long)]
    genotype_scale: Option<f64>,
    #[arg(long)]
    env_scale: Option<f64>,
    #[arg(long)]
    plant_scale: Option<f64>,
    /// Draw a fresh basis for plot-level noise instead of reusing the genotype basis
    #[arg(long)]
    independent_plant_basis: bool,
    /// Output directory for spectra.csv and ground_truth.json
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
}

impl GenArgs {
    fn config(&self) -> SyntheticConfig {
        let d = SyntheticConfig::default();
        SyntheticConfig {
            genotypes: self.genotypes,
            envs: self.envs,
            reps: self.reps,
            wavelengths: self.wavelengths,
            genotype_dim: self.genotype_dim.unwrap_or(d.genotype_dim),
            env_dim: self.env_dim.unwrap_or(d.env_dim),
            plant_dim: self.plant_dim.unwrap_or(d.plant_dim),
            genotype_scale: self.genotype_scale.unwrap_or(d.genotype_scale),
            env_scale: self.env_scale.unwrap_or(d.env_scale),
            plant_scale: self.plant_scale.unwrap_or(d.plant_scale),
            shared_plant_basis: !self.independent_plant_basis,
            seed: self.seed,
        }
    }
}

pub fn run(args: &GenArgs) -> Result<()> {
    let cfg = args.config();
    let (data, truth) = generate_synthetic(&cfg)?;
    create_dir(&args.out)?;
    let csv = args.out.join("spectra.csv");
    write_csv(&csv, &data)?;
    write_json(&args.out.join("ground_truth.json"), &truth)?;
    println!(
        "wrote {}: G={} E={} N={} D={} records={}",
        csv.display(),
        cfg.genotypes,
        cfg.envs,
        cfg.reps,
        data.wavelengths,
        data.len()
    );
    Ok(())
}
