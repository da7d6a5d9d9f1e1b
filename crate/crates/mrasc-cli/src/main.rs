//! `mrasc`: reproducible multi-resolution acoustic scene classification
//! runs, from synthetic corpus generation through training and reports.

mod commands;
mod config;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) | Self::Runtime(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "mrasc",
    about = "Multi-resolution acoustic scene classification experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic scene corpus
    Synth(commands::synth::SynthArgs),
    /// Extract aligned multi-resolution segments into a store
    Extract(commands::extract::ExtractArgs),
    /// Train one model across all cross-validation folds
    Train(commands::train::TrainArgs),
    /// Evaluate trained runs: raw, grouped or the five-model ensemble
    Eval(commands::eval::EvalArgs),
    /// Build the comparison table and per-class accuracy chart
    Report(commands::report::ReportArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are successes, anything else is usage
            let benign = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            std::process::exit(if benign { 0 } else { 1 });
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Extract(args) => commands::extract::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.code());
    }
}
