//! `kfat`: generate synthetic manoeuvres, tune UKF process noise with TSBO or
//! a GA, and evaluate or compare the tuned filters.

mod commands;
mod dataset;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{CompareArgs, EvaluateArgs, GenDataArgs, InspectArgs, TuneArgs};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kfat", version, about = "Auto-tune UKF process noise for vehicle sideslip estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the training and test manoeuvre sets.
    GenData(GenDataArgs),
    /// Tune the process noise on the training set.
    Tune(TuneArgs),
    /// Score a parameter set on a dataset.
    Evaluate(EvaluateArgs),
    /// Tabulate several tuning results against the first.
    Compare(CompareArgs),
    /// Refit and dump the surrogate of a tuning trace.
    InspectSurrogate(InspectArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("KFAT_THREADS") else { return Ok(()) };
    let threads = value
        .parse::<usize>()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("KFAT_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(command: Command) -> Result<(), CliError> {
    configure_threads()?;
    match command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::InspectSurrogate(a) => commands::inspect_surrogate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
