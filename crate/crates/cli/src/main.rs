//! `fsvol`: batch frontend for simulation, estimation, Monte Carlo sweeps, data ingestion
//! and asymptotic variances.
//!
//! Exit codes: 0 success, 2 invalid input, 3 data or I/O error, 4 numerical degeneracy.

// `!(x > 0)` style guards are intentional: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fsvol_core::{Error, ErrorClass, Result};
use serde_json::json;

use crate::commands::{AvarArgs, EstimateArgs, IngestArgs, McArgs, SimulateArgs};
use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "fsvol", disable_version_flag = true, about = "Curve-panel stochastic volatility toolkit")]
struct Cli {
    /// TOML config; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print version information as JSON and exit
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a curve panel and write it with a sidecar of the true parameters
    Simulate(SimulateArgs),
    /// Estimate the latent AR parameters and Ghat from a panel
    Estimate(EstimateArgs),
    /// Monte Carlo bias/RMSE tables
    Mc(McArgs),
    /// Clean raw intraday prices into a cumulative intraday return panel
    Ingest(IngestArgs),
    /// Asymptotic variances of the estimators for given AR parameters
    Avar(AvarArgs),
}

fn version_json() -> serde_json::Value {
    json!({
        "name": env!("CARGO_PKG_NAME"),
        "binary": "fsvol",
        "version": env!("CARGO_PKG_VERSION"),
        "panel_magic": String::from_utf8_lossy(fsvol_core::io::PANEL_MAGIC),
    })
}

/// Flag seed, else the top-level config seed.
fn merge_seed(seed: Option<u64>, file: &FileConfig) -> Option<u64> {
    seed.or(file.seed)
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(t) = cli.threads.or(file.threads) {
        if t == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Validation(format!("cannot size thread pool: {e}")))?;
    }
    let Some(command) = cli.command else {
        return Err(Error::Validation("no subcommand given; see --help".into()));
    };
    match command {
        Command::Simulate(a) => {
            let mut a = a.overlay(file.section("simulate")?);
            a.seed = merge_seed(a.seed, &file);
            commands::simulate(a)
        }
        Command::Estimate(a) => commands::estimate(a.overlay(file.section("estimate")?)),
        Command::Mc(a) => {
            let mut a = a.overlay(file.section("mc")?);
            a.seed = merge_seed(a.seed, &file);
            commands::mc(a)
        }
        Command::Ingest(a) => commands::ingest(a.overlay(file.section("ingest")?)),
        Command::Avar(a) => commands::avar(a.overlay(file.section("avar")?)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.version {
        println!("{}", version_json());
        return ExitCode::SUCCESS;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
