//! Scenario-driven command line for the platoon models: validation,
//! stability reports, stability charts, trajectories and bifurcation sweeps,
//! written as CSV and JSON with a run manifest next to every output set.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

use clap::{Parser, Subcommand};
use scenario::ChartGridFlag;
use std::path::PathBuf;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ccfm", version, about = "Car-following platoon analysis and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file; exit 1 when it is invalid.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        /// Also write validation.json and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-vehicle local, oscillation, string and robust stability report.
    Stability {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Critical delay over a grid of feedback gains.
    Chart {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Grid `a:b:n` of n gains on [a, b].
        #[arg(long)]
        gamma_grid: Option<ChartGridFlag>,
    },
    /// Integrate the platoon and write every `stride`-th step.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        stride: u64,
    },
    /// Bifurcation diagram over the scenario's sweep grid.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads; 0 uses one per core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

/// Runs one command and returns the summary line.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Validate { scenario, out } => commands::validate(&scenario, out.as_deref()),
        Command::Stability { scenario, out } => commands::stability(&scenario, &out),
        Command::Chart {
            scenario,
            out,
            gamma_grid,
        } => commands::chart(&scenario, &out, gamma_grid),
        Command::Simulate { scenario, out, stride } => commands::simulate(&scenario, &out, stride as usize),
        Command::Sweep { scenario, out, workers } => commands::sweep(&scenario, &out, workers),
    }
}
