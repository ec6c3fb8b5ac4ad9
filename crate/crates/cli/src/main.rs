//! `locc-usd`: run, optimize and verify unambiguous discrimination
//! protocols for two bipartite states.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locc_usd::protocols::ProtocolKind;

use crate::config::{Format, Target};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error(transparent)]
    Core(#[from] locc_usd::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Core(_) => 2,
            CliError::Parse { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "locc-usd", version, about = "Unambiguous discrimination of two bipartite states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the result here instead of stdout.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Sample size, draw count or curve points, depending on the command.
    #[arg(long)]
    n: Option<u64>,
    /// Grid-search cell size at which zooming stops.
    #[arg(long)]
    resolution: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one protocol on a configured ensemble.
    Discriminate {
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        /// Run the global scheme with the product of the configured
        /// (or default) local schedules and report the gap to LOCC.
        #[arg(long)]
        q_from_locc: bool,
        /// Skip the trace-rule cross-check.
        #[arg(long)]
        formula_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form optimum with a grid-search cross-check.
    Optimize {
        #[arg(long, value_enum)]
        target: Option<Target>,
        /// Skip the grid-search oracle.
        #[arg(long)]
        formula_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Sequential hybrid versus one sequential stage on the whole system.
    Ssd {
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        s_prime: Option<f64>,
        #[arg(long)]
        formula_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Reproducing, broadcasting or sequential hybrid.
    Hybrid {
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        #[arg(long)]
        formula_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check a claim (`all` for every one); exits 1 on any failure.
    Verify {
        claim: String,
        #[command(flatten)]
        common: Common,
    },
    /// Emit the series of a figure (fig3, fig6, fig7, fig8).
    Figure {
        id: String,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo run of a protocol, or `--protocol case-iii` for the
    /// sequential-hybrid region search.
    Sample {
        #[arg(long)]
        protocol: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
