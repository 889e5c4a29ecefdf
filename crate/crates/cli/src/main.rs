//! `nsl`: command-line driver for the identification pipeline.
//!
//! Subcommands cover the full workflow: `generate` simulates a benchmark
//! system into a dataset file, `sweep` fills a registry from a TOML grid
//! description, `train` fits a single model and saves its checkpoint,
//! `fit` extracts a lower envelope from a registry and fits a broken power
//! law to it, and `plot` renders a registry as a log-log SVG scatter.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O or numerical failure,
//! 4 empty selection, 5 infeasible fit.

mod commands;
mod svg;

use clap::{Parser, Subcommand};
use nsl_core::Error;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nsl", version, about = "Scaling-law experiments for neural system identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark system and write a dataset file.
    Generate(commands::GenerateArgs),
    /// Run every missing grid point of a sweep into a registry.
    Sweep(commands::SweepArgs),
    /// Train one model and save its checkpoint.
    Train(commands::TrainArgs),
    /// Fit a broken power law to a registry's lower envelope.
    Fit(commands::FitArgs),
    /// Render a registry as a log-log scatter plot (SVG).
    Plot(commands::PlotArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::EmptySelection(_) => 4,
        Error::InsufficientData(_) | Error::FitDiverged { .. } => 5,
        _ => 3,
    }
}

fn run(cli: Cli) -> nsl_core::Result<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Train(a) => commands::train(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Plot(a) => commands::plot(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            if code == 2 {
                eprintln!("run `nsl --help` or `nsl <command> --help` for usage");
            }
            ExitCode::from(code)
        }
    }
}
