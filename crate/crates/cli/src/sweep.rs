use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use gxe_cae::dataio::{Dataset, GENOTYPE_TRAIT};
use gxe_cae::downstream::{extract_features, kfold_cv, FeatureSource};
use gxe_cae::model::{LatentDims, ModelKind, NetConfig};

use crate::common::{create_dir, csv_writer, load_normalized, write_manifest, write_run, FitArgs, NetArgs, RunConfig};
use crate::error::{CliError, Result};
use crate::predict::{require_trait, RegressorArg, RegressorArgs};

/// Caps the number of sweep cells trained at once.
pub const THREADS_VAR: &str = "GXE_CAE_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Mask,
    Depth,
    Latent,
}

impl Axis {
    fn default_values(self) -> &'static str {
        match self {
            Axis::Mask => "0,0.2,0.5,0.7",
            Axis::Depth => "1,2,3,4",
            Axis::Latent => "6-2-2,12-4-4,24-8-8,48-16-16",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Mask(f64),
    Depth(usize),
    Latent(String),
}

impl Cell {
    fn slug(&self) -> String {
        match self {
            Cell::Mask(m) => format!("mask_{m}"),
            Cell::Depth(d) => format!("depth_{d}"),
            Cell::Latent(l) => format!("latent_{l}"),
        }
    }
}

/// Parses a comma-separated grid for `axis`. An empty grid is a usage error.
pub fn parse_grid(axis: Axis, values: &str) -> Result<Vec<Cell>> {
    let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::usage("the sweep grid is empty; pass at least one value to --values"));
    }
    let bad = |v: &str| CliError::usage(format!("`{v}` is not a valid {axis:?} value").to_lowercase());
    items
        .into_iter()
        .map(|v| match axis {
            Axis::Mask => v.parse::<f64>().map(Cell::Mask).map_err(|_| bad(v)),
            Axis::Depth => v.parse::<usize>().map(Cell::Depth).map_err(|_| bad(v)),
            Axis::Latent => v
                .parse::<LatentDims>()
                .map(|d| Cell::Latent(d.to_string()))
                .map_err(|_| bad(v)),
        })
        .collect()
}

/// Short parameter count, e.g. `2.2M` or `392K`.
pub fn format_count(n: usize) -> String {
    let x = n as f64;
    if x >= 1e6 {
        format!("{:.1}M", x / 1e6)
    } else if x >= 1e3 {
        format!("{:.0}K", x / 1e3)
    } else {
        n.to_string()
    }
}

/// Train one compositional model per grid value and score its composed
/// features downstream
#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Spectra CSV with trait columns
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated grid; defaults to the standard grid for the axis
    #[arg(long)]
    values: Option<String>,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long = "trait", default_value = GENOTYPE_TRAIT)]
    trait_name: String,
    #[arg(long, value_enum, default_value_t = RegressorArg::Ridge)]
    regressor: RegressorArg,
    #[command(flatten)]
    regressors: RegressorArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Output directory; each cell gets its own subdirectory under cells/
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct CellResult {
    cell: Cell,
    label: String,
    parameters: usize,
    layers: usize,
    best_epoch: usize,
    val_loss: f64,
    r2: f64,
    r2_std: f64,
}

fn cell_config(base: &RunConfig, cell: &Cell, input_dim: usize) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match cell {
        Cell::Mask(m) => {
            cfg.train.mask_fraction = *m;
            cfg.train.validate()?;
        }
        Cell::Depth(d) => cfg.net = NetConfig::with_depth(input_dim, *d)?,
        Cell::Latent(l) => {
            let dims: LatentDims = l.parse()?;
            cfg.layout = dims.with_design(base.layout.envs, base.layout.reps)?;
        }
    }
    Ok(cfg)
}

fn run_cell(args: &SweepArgs, cfg: &RunConfig, cell: &Cell, data: &Dataset) -> Result<CellResult> {
    let outcome = cfg.fit(data)?;
    let dir = args.out.join("cells").join(cell.slug());
    create_dir(&dir)?;
    write_run(&dir, &outcome)?;
    let table = extract_features(FeatureSource::CaeComposed, Some(&outcome.params), data, args.regressors.pca_components)?;
    let y = table.trait_values(data, &args.trait_name)?;
    let regressor = args.regressors.regressor(args.regressor, table.features.cols());
    let report = kfold_cv(&table, &y, &args.trait_name, &regressor, args.folds, cfg.train.seed)?;
    let parameters = outcome.params.param_count();
    let label = match cell {
        Cell::Mask(m) => m.to_string(),
        Cell::Depth(_) => format_count(parameters),
        Cell::Latent(_) => format!("{} ({})", cfg.layout.zg + cfg.layout.ze + cfg.layout.zp, cfg.layout.dims_label()),
    };
    Ok(CellResult {
        cell: cell.clone(),
        label,
        parameters,
        layers: match cell {
            Cell::Depth(d) => *d,
            _ => cfg.net.depth(),
        },
        best_epoch: outcome.best_epoch,
        val_loss: outcome.best_val.total,
        r2: report.mean,
        r2_std: report.std,
    })
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::usage(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

fn write_table(path: &Path, axis: Axis, rows: &[CellResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    match axis {
        Axis::Mask => w.write_record(["mask", "val_loss", "r2"])?,
        Axis::Depth => w.write_record(["parameters", "layers", "val_loss", "r2"])?,
        Axis::Latent => w.write_record(["latent", "val_loss", "r2"])?,
    }
    for r in rows {
        let (val, r2) = (r.val_loss.to_string(), r.r2.to_string());
        match axis {
            Axis::Depth => w.write_record([r.label.clone(), r.layers.to_string(), val, r2])?,
            _ => w.write_record([r.label.clone(), val, r2])?,
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let grid = parse_grid(args.axis, args.values.as_deref().unwrap_or(args.axis.default_values()))?;
    if args.axis == Axis::Depth && (args.net.hidden.is_some() || args.net.depth.is_some()) {
        return Err(CliError::usage("--hidden and --depth are set by the depth sweep itself"));
    }
    let threads = thread_cap()?;
    let loaded = load_normalized(&args.data)?;
    require_trait(&loaded.data, &args.trait_name)?;
    let base = RunConfig::build(&loaded, ModelKind::Cae, &args.net, &args.fit)?;
    let configs = grid
        .iter()
        .map(|c| cell_config(&base, c, loaded.data.wavelengths))
        .collect::<Result<Vec<_>>>()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker threads: {e}")))?;
    let rows = pool.install(|| {
        grid.par_iter()
            .zip(&configs)
            .map(|(cell, cfg)| run_cell(args, cfg, cell, &loaded.data))
            .collect::<Result<Vec<_>>>()
    })?;

    write_table(&args.out.join("sweep.csv"), args.axis, &rows)?;
    #[derive(Serialize)]
    struct Config<'a> {
        axis: Axis,
        grid: &'a [Cell],
        base: &'a RunConfig,
        trait_name: &'a str,
        regressor: String,
        folds: usize,
    }
    write_manifest(
        &args.out,
        "sweep",
        Config {
            axis: args.axis,
            grid: &grid,
            base: &base,
            trait_name: &args.trait_name,
            regressor: args.regressors.regressor(args.regressor, usize::MAX).hyperparameters(),
            folds: args.folds,
        },
        &rows,
    )?;
    for r in &rows {
        println!("{:<16} val_loss {:.6}  r2 {:.3} ({:.3})", r.label, r.val_loss, r.r2, r.r2_std);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_counts_like_the_table() {
        assert_eq!(format_count(14_734_015), "14.7M");
        assert_eq!(format_count(2_229_215), "2.2M");
        assert_eq!(format_count(392_100), "392K");
        assert_eq!(format_count(950), "950");
    }

    #[test]
    fn parses_grids() {
        assert_eq!(
            parse_grid(Axis::Mask, Axis::Mask.default_values()).unwrap(),
            vec![Cell::Mask(0.0), Cell::Mask(0.2), Cell::Mask(0.5), Cell::Mask(0.7)]
        );
        assert_eq!(parse_grid(Axis::Depth, "1, 3").unwrap(), vec![Cell::Depth(1), Cell::Depth(3)]);
        assert_eq!(parse_grid(Axis::Latent, "6-2-2").unwrap(), vec![Cell::Latent("6-2-2".into())]);
        assert!(matches!(parse_grid(Axis::Mask, " , "), Err(CliError::Usage(_))));
        assert!(matches!(parse_grid(Axis::Latent, "6-2"), Err(CliError::Usage(_))));
        assert!(matches!(parse_grid(Axis::Depth, "x"), Err(CliError::Usage(_))));
    }
}
