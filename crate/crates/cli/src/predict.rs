use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use gxe_cae::dataio::Dataset;
use gxe_cae::downstream::{extract_features, kfold_cv, FeatureSource, GbtParams, Regressor, DEFAULT_PCA_COMPONENTS, DEFAULT_RIDGE_ALPHA};
use gxe_cae::model::{ModelKind, ModelParams};

use crate::common::{check_width, create_dir, csv_writer, load_model, load_normalized, write_manifest};
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    #[value(name = "raw")]
    Raw,
    #[value(name = "raw_pca")]
    RawPca,
    #[value(name = "ae_latent")]
    AeLatent,
    #[value(name = "cae_composed")]
    CaeComposed,
}

impl From<FeatureArg> for FeatureSource {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::Raw => FeatureSource::Raw,
            FeatureArg::RawPca => FeatureSource::RawPca,
            FeatureArg::AeLatent => FeatureSource::AeLatent,
            FeatureArg::CaeComposed => FeatureSource::CaeComposed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegressorArg {
    Ridge,
    Plsr,
    Gbt,
}

/// Regressor hyperparameters shared by `predict` and `sweep`.
#[derive(Args, Clone, Debug)]
pub struct RegressorArgs {
    #[arg(long, default_value_t = DEFAULT_RIDGE_ALPHA)]
    pub ridge_alpha: f64,
    /// PLSR components, capped at the feature count
    #[arg(long, default_value_t = 10)]
    pub pls_components: usize,
    #[arg(long, default_value_t = GbtParams::default().max_depth)]
    pub gbt_depth: usize,
    #[arg(long, default_value_t = GbtParams::default().n_estimators)]
    pub gbt_trees: usize,
    #[arg(long, default_value_t = GbtParams::default().learning_rate)]
    pub gbt_learning_rate: f64,
    #[arg(long, default_value_t = GbtParams::default().min_samples_leaf)]
    pub gbt_min_leaf: usize,
    /// Principal components for raw_pca features
    #[arg(long, default_value_t = DEFAULT_PCA_COMPONENTS)]
    pub pca_components: usize,
}

impl RegressorArgs {
    pub fn regressor(&self, which: RegressorArg, feature_count: usize) -> Regressor {
        match which {
            RegressorArg::Ridge => Regressor::Ridge {
                alpha: self.ridge_alpha,
            },
            RegressorArg::Plsr => Regressor::Plsr {
                components: self.pls_components.min(feature_count),
            },
            RegressorArg::Gbt => Regressor::Gbt(GbtParams {
                max_depth: self.gbt_depth,
                n_estimators: self.gbt_trees,
                learning_rate: self.gbt_learning_rate,
                min_samples_leaf: self.gbt_min_leaf,
            }),
        }
    }
}

/// Cross-validated trait prediction from raw or learned features
#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Spectra CSV with trait columns
    #[arg(long)]
    data: PathBuf,
    /// Trained model(s); learned features pick the checkpoint of matching kind
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    features: Vec<FeatureArg>,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    model: Vec<RegressorArg>,
    #[arg(long = "trait")]
    trait_name: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seeds the genotype-to-fold assignment
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    regressors: RegressorArgs,
    /// Output directory
    #[arg(long, short)]
    out: PathBuf,
}

pub fn require_trait(data: &Dataset, name: &str) -> Result<()> {
    if data.trait_names.iter().any(|t| t == name) {
        return Ok(());
    }
    let available = if data.trait_names.is_empty() {
        "none".to_string()
    } else {
        data.trait_names.join(", ")
    };
    Err(gxe_cae::Error::Invalid(format!("trait `{name}` is not in the data; available traits: {available}")).into())
}

fn models_by_kind(paths: &[PathBuf], data: &Dataset) -> Result<BTreeMap<String, (PathBuf, ModelParams)>> {
    let mut out = BTreeMap::new();
    for p in paths {
        let params = load_model(p)?;
        check_width(&params, data, p)?;
        let kind = params.kind.to_string();
        if let Some((prev, _)) = out.insert(kind.clone(), (p.clone(), params)) {
            return Err(CliError::usage(format!(
                "{} and {} both hold a {kind} model",
                prev.display(),
                p.display()
            )));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Config<'a> {
    data: &'a Path,
    checkpoints: Vec<&'a Path>,
    trait_name: &'a str,
    folds: usize,
    seed: u64,
    pca_components: usize,
}

#[derive(Serialize)]
struct PairResult {
    features: String,
    model: String,
    hyperparameters: String,
    folds: Vec<f64>,
    mean: f64,
    std: f64,
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let loaded = load_normalized(&args.data)?;
    require_trait(&loaded.data, &args.trait_name)?;
    let models = models_by_kind(&args.checkpoint, &loaded.data)?;
    let params_for = |source: FeatureSource| -> Result<Option<&ModelParams>> {
        let kind = match source {
            FeatureSource::AeLatent => ModelKind::Vanilla,
            FeatureSource::CaeComposed => ModelKind::Cae,
            _ => return Ok(None),
        };
        models
            .get(&kind.to_string())
            .map(|(_, p)| Some(p))
            .ok_or_else(|| CliError::usage(format!("{source} features need a {kind} model passed with --checkpoint")))
    };
    // resolve every pair's inputs before any work
    let mut features = Vec::new();
    for f in &args.features {
        let source = FeatureSource::from(*f);
        if !features.iter().any(|(s, _)| *s == source) {
            features.push((source, params_for(source)?));
        }
    }

    let mut results = Vec::new();
    for (source, params) in &features {
        let table = extract_features(*source, *params, &loaded.data, args.regressors.pca_components)?;
        let y = table.trait_values(&loaded.data, &args.trait_name)?;
        for m in &args.model {
            let regressor = args.regressors.regressor(*m, table.features.cols());
            let report = kfold_cv(&table, &y, &args.trait_name, &regressor, args.folds, args.seed)?;
            println!("{:<13} {:<6} {}", source.as_str(), report.model, report.summary());
            results.push(PairResult {
                features: source.to_string(),
                model: report.model.clone(),
                hyperparameters: report.hyperparameters.clone(),
                folds: report.folds.clone(),
                mean: report.mean,
                std: report.std,
            });
        }
    }

    create_dir(&args.out)?;
    let folds_path = args.out.join("folds.csv");
    let mut w = csv_writer(&folds_path)?;
    w.write_record(["features", "model", "trait", "fold", "r2"])?;
    for r in &results {
        for (i, v) in r.folds.iter().enumerate() {
            w.write_record([&r.features, &r.model, &args.trait_name, &i.to_string(), &v.to_string()])?;
        }
    }
    w.flush().map_err(|e| CliError::io(&folds_path, e))?;

    let summary_path = args.out.join("summary.csv");
    let mut w = csv_writer(&summary_path)?;
    w.write_record(["features", "model", "trait", "hyperparameters", "mean", "std", "summary"])?;
    for r in &results {
        w.write_record([
            r.features.clone(),
            r.model.clone(),
            args.trait_name.clone(),
            r.hyperparameters.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            format!("{:.3} ({:.3})", r.mean, r.std),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&summary_path, e))?;

    write_manifest(
        &args.out,
        "predict",
        Config {
            data: &args.data,
            checkpoints: args.checkpoint.iter().map(PathBuf::as_path).collect(),
            trait_name: &args.trait_name,
            folds: args.folds,
            seed: args.seed,
            pca_components: args.regressors.pca_components,
        },
        &results,
    )?;
    Ok(())
}
