use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, ValueEnum};
use serde::Serialize;

use gxe_cae::dataio::{group_by_genotype, load_csv, minmax_normalize, train_val_split, Dataset, GenotypeGroup, NormalizationStats};
use gxe_cae::model::{init_params, save_checkpoint, LatentDims, LatentLayout, ModelKind, ModelParams, NetConfig};
use gxe_cae::optim::{stack_groups, train, OptimizerKind, TrainConfig, TrainOutcome};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Cae,
    Vanilla,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Cae => ModelKind::Cae,
            ModelArg::Vanilla => ModelKind::Vanilla,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Lbfgs,
    Gd,
}

/// Network shape shared by `train` and `sweep`.
#[derive(Args, Clone, Debug)]
pub struct NetArgs {
    /// Latent partition sizes as zg-ze-zp
    #[arg(long, default_value = "12-4-4")]
    pub latent: LatentDims,
    /// Hidden widths between spectrum and latent, comma-separated
    #[arg(long, value_delimiter = ',', conflicts_with = "depth")]
    pub hidden: Option<Vec<usize>>,
    /// Use one of the preset stacks by layer count (1..=4)
    #[arg(long)]
    pub depth: Option<usize>,
}

impl NetArgs {
    pub fn net(&self, input_dim: usize) -> Result<NetConfig> {
        Ok(match (&self.hidden, self.depth) {
            (Some(h), _) => NetConfig::new(input_dim, h.clone())?,
            (None, Some(d)) => NetConfig::with_depth(input_dim, d)?,
            (None, None) => NetConfig::with_depth(input_dim, 1)?,
        })
    }
}

/// Optimizer and schedule flags shared by `train` and `sweep`.
#[derive(Args, Clone, Debug)]
pub struct FitArgs {
    /// Fraction of input wavelengths zeroed per epoch
    #[arg(long, default_value_t = 0.0)]
    pub mask: f64,
    /// Weight of the latent correlation penalty (compositional model only)
    #[arg(long)]
    pub lambda_corr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 15)]
    pub patience: usize,
    /// Share of genotypes held out for validation
    #[arg(long, default_value_t = 0.15)]
    pub val_fraction: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Lbfgs)]
    pub optimizer: OptimizerArg,
    /// Step size for `--optimizer gd`
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
}

impl FitArgs {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            optimizer: match self.optimizer {
                OptimizerArg::Lbfgs => OptimizerKind::Lbfgs,
                OptimizerArg::Gd => OptimizerKind::Gd,
            },
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            lambda_corr: self.lambda_corr.unwrap_or(TrainConfig::default().lambda_corr),
            mask_fraction: self.mask,
            seed: self.seed,
            ..Default::default()
        };
        cfg.validate()?;
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(CliError::usage(format!(
                "--val-fraction must lie in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(cfg)
    }
}

/// A dataset scaled to [0, 1] with the statistics used.
pub struct Loaded {
    pub path: PathBuf,
    pub data: Dataset,
    pub stats: NormalizationStats,
}

pub fn load_normalized(path: &Path) -> Result<Loaded> {
    let raw = load_csv(path)?;
    if raw.is_empty() {
        return Err(gxe_cae::Error::Invalid(format!("{} holds no records", path.display())).into());
    }
    let (data, stats) = minmax_normalize(&raw)?;
    Ok(Loaded {
        path: path.to_path_buf(),
        data,
        stats,
    })
}

fn list_preview(items: &[String]) -> String {
    const SHOWN: usize = 10;
    let head = items.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if items.len() > SHOWN {
        format!("{head} and {} more", items.len() - SHOWN)
    } else {
        head
    }
}

/// Complete groups for the compositional model; any incomplete genotype is
/// an error naming it.
pub fn complete_groups(data: &Dataset, envs: usize, reps: usize) -> Result<Vec<GenotypeGroup>> {
    let grouping = group_by_genotype(&data.records, envs, reps);
    if !grouping.excluded.is_empty() {
        return Err(gxe_cae::Error::Invalid(format!(
            "{} genotype(s) lack a complete {envs} env x {reps} rep design: {}",
            grouping.excluded.len(),
            list_preview(&grouping.excluded)
        ))
        .into());
    }
    Ok(grouping.groups)
}

/// Every record, one group per genotype whatever its design.
pub fn genotype_batches(data: &Dataset) -> Vec<GenotypeGroup> {
    let mut by: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in &data.records {
        by.entry(r.genotype.as_str()).or_default().push(r.clone());
    }
    by.into_iter()
        .map(|(g, plants)| GenotypeGroup {
            genotype: g.to_string(),
            plants,
        })
        .collect()
}

/// A validated training job.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub model: ModelKind,
    pub layout: LatentLayout,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub val_fraction: f64,
}

impl RunConfig {
    pub fn build(loaded: &Loaded, model: ModelKind, net: &NetArgs, fit: &FitArgs) -> Result<Self> {
        let (envs, reps) = loaded.data.design();
        Ok(RunConfig {
            data: loaded.path.clone(),
            model,
            layout: net.latent.with_design(envs, reps)?,
            net: net.net(loaded.data.wavelengths)?,
            train: fit.train_config()?,
            val_fraction: fit.val_fraction,
        })
    }

    /// Splits genotypes, initializes from the seed and trains.
    pub fn fit(&self, data: &Dataset) -> Result<TrainOutcome> {
        let groups = match self.model {
            ModelKind::Cae => complete_groups(data, self.layout.envs, self.layout.reps)?,
            ModelKind::Vanilla => genotype_batches(data),
        };
        let (tr, va) = train_val_split(&groups, self.val_fraction, self.train.seed)?;
        let init = init_params(self.model, &self.net, &self.layout, self.train.seed)?;
        Ok(train(&init, &stack_groups(&tr), &stack_groups(&va), &self.train)?)
    }
}

/// Writes `model.ckpt` and `train_log.csv` into `dir`.
pub fn write_run(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    save_checkpoint(&outcome.params, dir.join("model.ckpt"))?;
    let mut w = csv_writer(&dir.join("train_log.csv"))?;
    w.write_record(["epoch", "train_recon", "train_corr", "val_recon", "val_corr", "val_total", "alpha"])?;
    for e in &outcome.log {
        w.write_record([
            e.epoch.to_string(),
            e.train_recon.to_string(),
            e.train_corr.to_string(),
            e.val_recon.to_string(),
            e.val_corr.to_string(),
            e.val_total.to_string(),
            e.alpha.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(dir.join("train_log.csv"), e))?;
    Ok(())
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create_file(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Header `w_0..w_{d-1}` for spectrum columns.
pub fn wavelength_header(d: usize) -> impl Iterator<Item = String> {
    (0..d).map(|w| format!("w_{w}"))
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    Ok(gxe_cae::model::load_checkpoint(path)?)
}

pub fn check_width(params: &ModelParams, data: &Dataset, path: &Path) -> Result<()> {
    if params.config.input_dim != data.wavelengths {
        return Err(gxe_cae::Error::Invalid(format!(
            "checkpoint {} expects {} wavelengths but the data has {}",
            path.display(),
            params.config.input_dim,
            data.wavelengths
        ))
        .into());
    }
    Ok(())
}

/// The reproducibility record written next to every command's outputs.
/// `created_at` is the only field that varies between identical runs.
#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub created_at: u64,
    pub config: C,
    pub results: R,
}

pub fn write_manifest<C: Serialize, R: Serialize>(dir: &Path, command: &str, config: C, results: R) -> Result<()> {
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            created_at,
            config,
            results,
        },
    )
}
