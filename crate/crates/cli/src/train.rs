use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use gxe_cae::losses::LossReport;
use gxe_cae::model::ModelKind;

use crate::common::{create_dir, load_normalized, write_manifest, write_run, FitArgs, ModelArg, NetArgs, RunConfig};
use crate::error::Result;

/// Train a compositional or vanilla autoencoder
#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Spectra CSV
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Cae)]
    model: ModelArg,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Output directory
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct TrainResults {
    seed: u64,
    param_count: usize,
    best_epoch: usize,
    stopped_epoch: usize,
    early_stopped: bool,
    best_val: LossReport,
    final_train_recon: Option<f64>,
    normalization: gxe_cae::dataio::NormalizationStats,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let kind = ModelKind::from(args.model);
    if kind == ModelKind::Vanilla && args.fit.lambda_corr.is_some() {
        eprintln!("warning: --lambda-corr has no effect on the vanilla model and is ignored");
    }
    let loaded = load_normalized(&args.data)?;
    let cfg = RunConfig::build(&loaded, kind, &args.net, &args.fit)?;
    let outcome = cfg.fit(&loaded.data)?;

    create_dir(&args.out)?;
    write_run(&args.out, &outcome)?;
    let results = TrainResults {
        seed: cfg.train.seed,
        param_count: outcome.params.param_count(),
        best_epoch: outcome.best_epoch,
        stopped_epoch: outcome.stopped_epoch,
        early_stopped: outcome.early_stopped,
        best_val: outcome.best_val,
        final_train_recon: outcome.log.last().map(|e| e.train_recon),
        normalization: loaded.stats,
    };
    write_manifest(&args.out, "train", &cfg, &results)?;
    println!(
        "{} model ({} parameters, latent {}): best epoch {} of {}, val loss {:.6} (recon {:.6}, corr {:.4}); seed {}",
        kind,
        results.param_count,
        cfg.layout.dims_label(),
        outcome.best_epoch,
        outcome.stopped_epoch,
        outcome.best_val.total,
        outcome.best_val.reconstruction,
        outcome.best_val.correlation,
        results.seed
    );
    Ok(())
}
