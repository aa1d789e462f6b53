use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, UpdateStats};
use crate::config::MiracleConfig;
use crate::env::{trailing_mean, Transition};
use crate::error::Result;

/// One learning-curve row, written after every completed episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub seed: u64,
    pub step: usize,
    pub episode: usize,
    pub trailing_mean_reward: f64,
    pub best_so_far: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub curve: Vec<CurveRow>,
    pub episode_returns: Vec<f64>,
    pub last_stats: UpdateStats,
    pub agent: Agent,
}

impl TrainOutcome {
    /// Trailing-100 mean episodic reward at the end of training.
    pub fn final_trailing_mean(&self) -> Option<f64> {
        trailing_mean(&self.episode_returns, 100)
    }
}

/// Runs the interaction loop: act, store, update (after warm-up), blend targets.
/// Checkpoints are written to `checkpoint_dir` when given.
pub fn train(cfg: &MiracleConfig, checkpoint_dir: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = cfg.env.make(cfg.seed);
    let mut agent = Agent::new(cfg, env.state_dim(), env.action_dim())?;
    let mut state = env.reset();
    let mut returns = Vec::new();
    let mut curve = Vec::new();
    let mut episode_reward = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut stats = UpdateStats::default();

    for step in 0..cfg.steps {
        let action = agent.select_action(&state, step)?;
        let out = env.step(&action);
        episode_reward += out.reward;
        let done = out.done;
        agent.observe(Transition {
            state: std::mem::replace(&mut state, out.next_state.clone()),
            action,
            reward: out.reward,
            next_state: out.next_state,
            done,
        });
        if done {
            returns.push(episode_reward);
            best = best.max(episode_reward);
            curve.push(CurveRow {
                seed: cfg.seed,
                step: step + 1,
                episode: returns.len(),
                trailing_mean_reward: trailing_mean(&returns, 100).expect("non-empty"),
                best_so_far: best,
            });
            episode_reward = 0.0;
            state = env.reset();
        }
        if step >= cfg.warmup_steps {
            stats = agent.update(step).inspect_err(|e| {
                log::error!("seed {} aborted at step {step}: {e}", cfg.seed);
            })?;
        }
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
                agent.save_checkpoint(dir.join(format!("seed{}_step{}.ckpt", cfg.seed, step + 1)))?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        agent.save_checkpoint(dir.join(format!("seed{}_final.ckpt", cfg.seed)))?;
    }
    Ok(TrainOutcome {
        curve,
        episode_returns: returns,
        last_stats: stats,
        agent,
    })
}

/// Writes curve rows with header `seed,step,episode,trailing_mean_reward,best_so_far`.
pub fn write_curve_csv<W: Write>(w: W, rows: &[CurveRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
