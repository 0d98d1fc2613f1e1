use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use gxe_cae::analysis::{env_divergence_report, latent_corr_report, write_densities, FactorAnalyzer, PartitionStats};
use gxe_cae::dataio::group_by_genotype;
use gxe_cae::model::ModelKind;
use gxe_cae::Matrix;

use crate::common::{check_width, create_dir, create_file, csv_writer, load_model, load_normalized, wavelength_header, write_json, write_manifest};
use crate::error::{CliError, Result};

/// Factor-specific reconstructions and divergence reports from a trained
/// compositional model. Spectra are in normalized [0, 1] units.
#[derive(Args, Debug)]
pub struct DisentangleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Spectra CSV
    #[arg(long)]
    data: PathBuf,
    /// Output directory
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Config<'a> {
    checkpoint: &'a Path,
    data: &'a Path,
}

#[derive(Serialize)]
struct DivergenceSummary {
    kl_original_mean: f64,
    kl_disentangled_mean: f64,
    kl_original: Vec<f64>,
    kl_disentangled: Vec<f64>,
}

#[derive(Serialize)]
struct CorrSummary {
    labels: Vec<usize>,
    overall: PartitionStats,
    within: PartitionStats,
    cross: PartitionStats,
}

#[derive(Serialize)]
struct Results {
    groups: usize,
    skipped_genotypes: Vec<String>,
    kl_original_mean: f64,
    kl_disentangled_mean: f64,
    cross_partition_mean_abs_corr: f64,
}

fn spectrum_row(lead: Vec<String>, spectrum: &[f64]) -> Vec<String> {
    lead.into_iter().chain(spectrum.iter().map(|v| v.to_string())).collect()
}

fn matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record((0..m.cols()).map(|c| format!("z_{c}")))?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(args: &DisentangleArgs) -> Result<()> {
    let params = load_model(&args.checkpoint)?;
    if params.kind != ModelKind::Cae {
        return Err(gxe_cae::Error::Invalid(format!(
            "{} holds a {} model, which has no latent partitions to analyze; train with --model cae",
            args.checkpoint.display(),
            params.kind
        ))
        .into());
    }
    let loaded = load_normalized(&args.data)?;
    check_width(&params, &loaded.data, &args.checkpoint)?;
    let layout = params.layout;
    let grouping = group_by_genotype(&loaded.data.records, layout.envs, layout.reps);
    if !grouping.excluded.is_empty() {
        eprintln!(
            "warning: skipping {} genotype(s) without a complete design",
            grouping.excluded.len()
        );
    }
    let groups = grouping.groups;
    let analyzer = FactorAnalyzer::new(params.clone(), &groups)?;
    let divergence = env_divergence_report(&analyzer, &groups)?;
    let corr = latent_corr_report(&params, &groups)?;

    create_dir(&args.out)?;
    let out = &args.out;
    let d = loaded.data.wavelengths;
    let header = |lead: &[&str]| -> Vec<String> {
        lead.iter().map(|s| s.to_string()).chain(wavelength_header(d)).collect()
    };

    let mut genotype_w = csv_writer(&out.join("genotype_specific.csv"))?;
    let mut macro_w = csv_writer(&out.join("macro_env_specific.csv"))?;
    let mut micro_w = csv_writer(&out.join("micro_env_specific.csv"))?;
    let mut diff_w = csv_writer(&out.join("differences.csv"))?;
    genotype_w.write_record(header(&["genotype", "plant", "env", "rep"]))?;
    macro_w.write_record(header(&["genotype", "env"]))?;
    micro_w.write_record(header(&["genotype", "plant", "env", "rep"]))?;
    diff_w.write_record(header(&["genotype", "factor", "index", "difference"]))?;
    for g in &groups {
        let gs = analyzer.genotype_specific(g)?;
        for (i, plant) in g.plants.iter().enumerate() {
            let lead = vec![g.genotype.clone(), i.to_string(), plant.env.to_string(), plant.rep.to_string()];
            genotype_w.write_record(spectrum_row(lead, gs.spectra.row(i)))?;
        }
        for env in 0..layout.envs {
            let m = analyzer.macro_env_specific(g, env)?;
            macro_w.write_record(spectrum_row(vec![g.genotype.clone(), env.to_string()], m.spectra.row(0)))?;
            for (label, diff) in &m.differences {
                let lead = vec![g.genotype.clone(), "macro_env".into(), env.to_string(), label.clone()];
                diff_w.write_record(spectrum_row(lead, diff.row(0)))?;
            }
        }
        for (i, plant) in g.plants.iter().enumerate() {
            let m = analyzer.micro_env_specific(g, i)?;
            let lead = vec![g.genotype.clone(), i.to_string(), plant.env.to_string(), plant.rep.to_string()];
            micro_w.write_record(spectrum_row(lead, m.spectra.row(0)))?;
            for (label, diff) in &m.differences {
                let lead = vec![g.genotype.clone(), "micro_env".into(), i.to_string(), label.clone()];
                diff_w.write_record(spectrum_row(lead, diff.row(0)))?;
            }
        }
    }
    for (w, name) in [
        (&mut genotype_w, "genotype_specific.csv"),
        (&mut macro_w, "macro_env_specific.csv"),
        (&mut micro_w, "micro_env_specific.csv"),
        (&mut diff_w, "differences.csv"),
    ] {
        w.flush().map_err(|e| CliError::io(out.join(name), e))?;
    }

    let mut kl = csv_writer(&out.join("env_kl.csv"))?;
    kl.write_record(["wavelength", "kl_original", "kl_disentangled"])?;
    for (w, (a, b)) in divergence
        .original
        .symmetric
        .iter()
        .zip(&divergence.disentangled.symmetric)
        .enumerate()
    {
        kl.write_record([w.to_string(), a.to_string(), b.to_string()])?;
    }
    kl.flush().map_err(|e| CliError::io(out.join("env_kl.csv"), e))?;
    write_densities(create_file(&out.join("densities_original.csv"))?, &divergence.original)?;
    write_densities(create_file(&out.join("densities_disentangled.csv"))?, &divergence.disentangled)?;
    write_json(
        &out.join("env_divergence.json"),
        &DivergenceSummary {
            kl_original_mean: divergence.original.mean,
            kl_disentangled_mean: divergence.disentangled.mean,
            kl_original: divergence.original.symmetric.clone(),
            kl_disentangled: divergence.disentangled.symmetric.clone(),
        },
    )?;

    matrix_csv(&out.join("latent_correlation.csv"), &corr.matrix)?;
    write_json(
        &out.join("latent_correlation.json"),
        &CorrSummary {
            labels: corr.labels.clone(),
            overall: corr.overall.clone(),
            within: corr.within.clone(),
            cross: corr.cross.clone(),
        },
    )?;

    let results = Results {
        groups: groups.len(),
        skipped_genotypes: grouping.excluded,
        kl_original_mean: divergence.original.mean,
        kl_disentangled_mean: divergence.disentangled.mean,
        cross_partition_mean_abs_corr: corr.cross.mean_abs,
    };
    write_manifest(
        out,
        "disentangle",
        Config {
            checkpoint: &args.checkpoint,
            data: &args.data,
        },
        &results,
    )?;
    println!(
        "{} groups: mean env KL original {:.4}, disentangled {:.4}; cross-partition mean |r| {:.4}",
        results.groups, results.kl_original_mean, results.kl_disentangled_mean, results.cross_partition_mean_abs_corr
    );
    Ok(())
}
