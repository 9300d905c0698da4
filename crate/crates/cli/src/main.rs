//! `infoflux` command-line front end.
//!
//! Every subcommand reads a JSON config (unknown keys are rejected), applies
//! the command-line overrides, and writes CSV tables plus a `report.json`
//! embedding the resolved config into the run directory.
//!
//! Exit codes: 0 success, 1 decomposition identity violated, 2 config or
//! input error, 3 fit did not converge, 4 plant failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod families;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "infoflux",
    version,
    about = "Information-flux causality, KL model fitting and information-based control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a dynamical system and store its observables.
    Simulate(RunArgs),
    /// Information-flux causality map and decomposition of a signal.
    Causality(RunArgs),
    /// Fit a parametric family by minimizing KL to a reference.
    Fit(RunArgs),
    /// Optimize sensor placement and actuator gain of a plant.
    Control(RunArgs),
    /// List the symbolic fixtures, optionally dumping one.
    Fixtures(FixtureArgs),
}

/// Flags shared by the config-driven subcommands.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Run directory for CSV and JSON outputs.
    #[arg(long, short, default_value = "run")]
    pub out: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of cells per variable (N_q).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Overrides the time lag, in samples (causality).
    #[arg(long)]
    pub lag: Option<usize>,
    /// Overrides the map order (causality).
    #[arg(long)]
    pub order: Option<usize>,
    /// Overrides the decomposition tolerance (causality) or the descent
    /// tolerance (fit, control).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    /// Fixture to dump.
    #[arg(long)]
    pub name: Option<String>,
    /// Length of a sampled trajectory of the named fixture.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] infoflux::Error),
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("flag --{flag} does not apply to `{command}`")]
    Flag { flag: &'static str, command: &'static str },
    #[error("decomposition identity violated for target {target}: residual {residual:e} bits exceeds {tolerance:e}")]
    Identity { target: String, residual: f64, tolerance: f64 },
    #[error("fit did not converge within {0} iterations; best parameters written")]
    NotConverged(usize),
    #[error("could not start the worker pool: {0}")]
    Workers(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(infoflux::Error::Divergence { .. }) => 4,
            CliError::Identity { .. } => 1,
            CliError::NotConverged(_) => 3,
            _ => 2,
        }
    }
}

fn init_workers(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Workers("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Workers(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            init_workers(args.workers)?;
            commands::simulate(&args)
        }
        Command::Causality(args) => {
            init_workers(args.workers)?;
            commands::causality(&args)
        }
        Command::Fit(args) => {
            init_workers(args.workers)?;
            commands::fit(&args)
        }
        Command::Control(args) => {
            init_workers(args.workers)?;
            commands::control(&args)
        }
        Command::Fixtures(args) => commands::fixtures(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
