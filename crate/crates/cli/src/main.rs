//! Command-line driver: synthetic data, training, factor analysis,
//! trait prediction and hyperparameter sweeps.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod common;
mod disentangle;
mod error;
mod gen;
mod predict;
mod sweep;
mod train;

#[derive(Parser, Debug)]
#[command(name = "gxe-cae", version, about = "Compositional autoencoders for genotype-by-environment spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    Gen(gen::GenArgs),
    Train(train::TrainArgs),
    Disentangle(disentangle::DisentangleArgs),
    Predict(predict::PredictArgs),
    Sweep(sweep::SweepArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Train(a) => train::run(a),
        Command::Disentangle(a) => disentangle::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Sweep(a) => sweep::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
