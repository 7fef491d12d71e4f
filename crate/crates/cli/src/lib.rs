//! Experiment harness for the `lccd` solvers.
//!
//! Four commands, each writing plot-ready CSV files under `--out`:
//! `topology` compares communication graphs, `async` sweeps thread counts
//! and lock modes, `svm` trains a linear SVM through its dual, and
//! `stochastic` runs the finite-sum engine.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

pub use commands::run;

#[derive(Parser, Debug)]
#[command(name = "lccd", version, about = "Pairwise coordinate descent experiments")]
pub struct Cli {
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with per-command tables; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed (default: LCCD_SEED, then 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write wall_s as 0 so same-seed runs produce identical files
    #[arg(long, global = true)]
    pub no_wall_clock: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sequential solver on one quadratic over several graph topologies
    Topology(config::TopologyOpts),
    /// Asynchronous engine over thread counts and lock modes
    Async(config::AsyncOpts),
    /// Linear SVM dual
    Svm(config::SvmOpts),
    /// Stochastic engine on a finite-sum preset
    Stochastic(config::StochasticOpts),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] lccd::Error),
    #[error("stop rule not met: {0}")]
    NotConverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(e) if e.is_config() => 2,
            CliError::Solver(e) if e.is_numeric() => 3,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Solver(lccd::Error::Parse { line: 1, message: "x".into() }).exit_code(), 2);
        assert_eq!(CliError::Solver(lccd::Error::Numerics("x".into())).exit_code(), 3);
        assert_eq!(CliError::NotConverged("x".into()).exit_code(), 1);
        assert_eq!(CliError::Solver(lccd::Error::MaxWallTime(1.0)).exit_code(), 1);
    }
}
