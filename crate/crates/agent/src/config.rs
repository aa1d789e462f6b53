use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvKind;
use crate::error::{AgentError, Result};

/// Reference density for the regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// Learned state-independent action model.
    LearnedMarginal,
    /// Uniform density on the action box (the soft actor-critic ablation).
    FixedUniform,
}

impl PriorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorMode::LearnedMarginal => "learned_marginal",
            PriorMode::FixedUniform => "fixed_uniform",
        }
    }
}

/// Training configuration. Unknown keys are rejected when parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiracleConfig {
    pub env: EnvKind,
    pub prior_mode: PriorMode,
    /// Multiplier applied to rewards; the regularizer keeps unit weight.
    pub reward_scale: f64,
    pub discount: f64,
    pub buffer_capacity: usize,
    pub minibatch: usize,
    /// Blend rate of the value target network.
    pub target_rate: f64,
    /// Latent samples per marginal-density estimate.
    pub marginal_samples: usize,
    /// Defaults per environment when unset.
    pub marginal_buffer_capacity: Option<usize>,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub marginal_hidden: Vec<usize>,
    pub steps: usize,
    /// Uniform-random steps before gradient updates start.
    pub warmup_steps: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Let policy gradients flow through the marginal density via the action.
    pub prior_gradient: bool,
    /// Write a checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for MiracleConfig {
    fn default() -> Self {
        MiracleConfig {
            env: EnvKind::PointMass,
            prior_mode: PriorMode::LearnedMarginal,
            reward_scale: 10.0,
            discount: 0.99,
            buffer_capacity: 1_000_000,
            minibatch: 256,
            target_rate: 0.01,
            marginal_samples: 20,
            marginal_buffer_capacity: None,
            learning_rate: 3e-4,
            hidden: vec![256, 256],
            marginal_hidden: vec![256, 256],
            steps: 30_000,
            warmup_steps: 1_000,
            log_std_min: -20.0,
            log_std_max: 2.0,
            prior_gradient: true,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl MiracleConfig {
    /// Small networks and batches sized for a single CPU core.
    pub fn desk(env: EnvKind) -> Self {
        MiracleConfig {
            env,
            minibatch: 32,
            hidden: vec![32, 32],
            marginal_hidden: vec![16],
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: MiracleConfig =
            toml::from_str(s).map_err(|e| AgentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn marginal_capacity(&self) -> usize {
        self.marginal_buffer_capacity
            .unwrap_or_else(|| self.env.default_marginal_capacity())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(AgentError::Config(msg.to_string()));
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad("discount must lie in (0, 1)");
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return bad("target_rate must lie in (0, 1]");
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return bad("learning_rate must be non-negative");
        }
        if self.buffer_capacity == 0 || self.minibatch == 0 || self.marginal_samples == 0 {
            return bad("buffer_capacity, minibatch and marginal_samples must be positive");
        }
        if self.marginal_capacity() == 0 {
            return bad("marginal_buffer_capacity must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.marginal_hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if !(self.log_std_min < self.log_std_max) {
            return bad("log_std_min must be below log_std_max");
        }
        Ok(())
    }
}
