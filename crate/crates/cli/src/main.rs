//! `dualprice`: learn, solve, deploy and evaluate dual-price allocation
//! policies from a JSON run config.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::Loaded;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "dualprice", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV.
    Gen(Common),
    /// Fit outcome (and propensity) models into a model bundle.
    Fit(Common),
    /// Solve the dual, write the policy artifact and print the KKT report.
    Solve(Common),
    /// Assign treatments to a covariates CSV.
    Assign(Common),
    /// Run the queueing simulation and write trace and aggregate CSVs.
    Simulate(Common),
    /// Evaluate a policy against perfect foresight and baselines.
    Evaluate(Common),
    /// Run the ratio-versus-training-size sweep.
    Sweep(Common),
    /// End-to-end run on a small synthetic instance.
    Demo(Common),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("DUALPRICE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("DUALPRICE_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size worker pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (name, common, action): (&str, Common, fn(&mut Run) -> Result<(), CliError>) = match cli.command {
        Command::Gen(c) => ("gen", c, commands::gen),
        Command::Fit(c) => ("fit", c, commands::fit),
        Command::Solve(c) => ("solve", c, commands::solve_cmd),
        Command::Assign(c) => ("assign", c, commands::assign),
        Command::Simulate(c) => ("simulate", c, commands::simulate),
        Command::Evaluate(c) => ("evaluate", c, commands::evaluate),
        Command::Sweep(c) => ("sweep", c, commands::sweep),
        Command::Demo(c) => ("demo", c, commands::demo),
    };
    let loaded = Loaded::read(&common.config)?;
    let mut run = Run::new(loaded, common.out, common.seed);
    action(&mut run)?;
    run.finish(name)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
