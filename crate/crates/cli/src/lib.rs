//! Experiment harness: grid-world sweeps, tabular solvers, oracle audits and
//! actor-critic training, each writing CSV/JSON files plus a hashed manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use manifest::{ExperimentManifest, FileEntry};

#[derive(Debug, Clone, Parser)]
#[command(name = "mireg", version, about = "Mutual-information regularized control experiments")]
pub struct Cli {
    /// TOML configuration file; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single seed (overrides the config).
    #[arg(long, global = true, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Solver mode for `vi` (standard, soft, mutual_information) or prior mode
    /// for `train` (learned_marginal, fixed_uniform, both).
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Soft and regularized value iteration over a list of betas on the grid world.
    GridworldSweep,
    /// Value iteration on the grid world or a flat MDP file.
    Vi,
    /// One application of the regularized optimal operator to zero values.
    BaSolve,
    /// Rate-distortion curve of a reward matrix.
    RateDistortion,
    /// Closed forms and bounds checked against brute-force oracles.
    Audit,
    /// Actor-critic training for every seed.
    Train,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GridworldSweep => "gridworld-sweep",
            Command::Vi => "vi",
            Command::BaSolve => "ba-solve",
            Command::RateDistortion => "rate-distortion",
            Command::Audit => "audit",
            Command::Train => "train",
        }
    }
}

impl Cli {
    /// Seeds from the flags, if any were given.
    pub fn seed_list(&self) -> Option<Vec<u64>> {
        match (&self.seed, &self.seeds) {
            (Some(s), _) => Some(vec![*s]),
            (None, Some(list)) => Some(list.clone()),
            (None, None) => None,
        }
    }
}

/// Loads the configuration and dispatches to the selected command.
pub fn run(cli: &Cli) -> Result<ExperimentManifest> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    commands::dispatch(cli, &cfg)
}
