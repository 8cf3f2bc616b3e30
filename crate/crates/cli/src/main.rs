//! `cofrag`: run, sweep and check coagulation-fragmentation experiments.
//!
//! Exit codes: 0 success, 2 invalid input (configuration, files, assumptions),
//! 3 runtime abort, 4 a check failed.

// `!(x > y)` deliberately treats NaN as out of order.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod files;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cofrag", version, about = "Coagulation-fragmentation experiments with balanced-growth coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a configuration against the standing assumptions and print the derived constants.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate one configuration and write its time series and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep a full snapshot at least this often (model time units).
        #[arg(long)]
        snapshot_every: Option<f64>,
    },
    /// Run the j-sweep, ρ-sweep or convergence study named in `[experiment]`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        snapshot_every: Option<f64>,
    },
    /// Apply the trajectory checks to a run directory; with a second run,
    /// also the stability check between the two.
    Check {
        run: PathBuf,
        other: Option<PathBuf>,
        /// Verdict file; defaults to `verdict.json` inside the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
    Parse(String),
    Runtime(String),
    CheckFailed(String),
}

impl CliError {
    pub fn from_core(e: cofrag_core::Error) -> CliError {
        use cofrag_core::Error as E;
        match e {
            E::StepTooSmall { .. } | E::NonFinite { .. } | E::ResourceCap(_) | E::Quadrature(_) => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) | CliError::Parse(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Runtime(m) => write!(f, "run aborted: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config, out } => commands::validate(&config, out.as_deref()),
        Command::Run { config, out, snapshot_every } => commands::run(&config, &out, snapshot_every),
        Command::Sweep { config, out, threads, snapshot_every } => {
            commands::sweep(&config, &out, threads, snapshot_every)
        }
        Command::Check { run, other, out } => commands::check(&run, other.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cofrag: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
