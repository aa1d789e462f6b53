//! Shared experiment configuration. Every command reads the same TOML schema;
//! sections a command does not use are ignored, unknown keys are rejected.

use std::path::Path;

use mireg_agent::MiracleConfig;
use mireg_core::audit::AuditConfig;
use mireg_core::{BellmanConfig, GridWorldSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridWorldSpec,
    pub solver: SolverSection,
    pub sweep: SweepSection,
    pub mdp: MdpSection,
    pub rate_distortion: RateDistortionSection,
    pub audit: AuditConfig,
    pub train: MiracleConfig,
}

/// Operator settings shared by `vi` and `ba-solve`, and the sweep tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub beta: f64,
    pub inner_tolerance: f64,
    pub outer_tolerance: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    /// `standard`, `soft` or `mutual_information`.
    pub mode: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            beta: 1.0,
            inner_tolerance: 5e-3,
            outer_tolerance: 5e-3,
            max_inner_iters: 10_000,
            max_outer_iters: 10_000,
            mode: "mutual_information".into(),
        }
    }
}

impl SolverSection {
    pub fn bellman(&self, beta: f64) -> BellmanConfig<f64> {
        BellmanConfig {
            beta,
            inner_tolerance: self.inner_tolerance,
            outer_tolerance: self.outer_tolerance,
            max_inner_iters: self.max_inner_iters,
            max_outer_iters: self.max_outer_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub betas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            betas: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
        }
    }
}

/// Optional flat-format MDP file; the grid world is used when absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdpSection {
    pub path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateDistortionSection {
    /// Rows are states, columns actions.
    pub reward: Vec<Vec<f64>>,
    /// State weights; uniform when empty.
    pub state_weights: Vec<f64>,
    pub betas: Vec<f64>,
}

impl Default for RateDistortionSection {
    fn default() -> Self {
        RateDistortionSection {
            reward: vec![vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.5], vec![0.3, 0.3, 0.6]],
            state_weights: Vec::new(),
            betas: vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
