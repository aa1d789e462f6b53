//! Deterministic grid world with a single rewarding goal cell.
//!
//! Cells are addressed as `(x, y)` with `(0, 0)` in the bottom-left corner;
//! `up` increases `y`. Cell `(x, y)` is state `y * width + x`, and one extra
//! absorbing terminal state follows the last cell. Every action taken in the
//! goal cell pays the goal reward and moves to the terminal state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::prob::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    Left,
    Right,
    Up,
    Down,
    Stay,
}

impl GridAction {
    pub const ALL: [GridAction; 5] = [
        GridAction::Left,
        GridAction::Right,
        GridAction::Up,
        GridAction::Down,
        GridAction::Stay,
    ];

    fn delta(self) -> (i64, i64) {
        match self {
            GridAction::Left => (-1, 0),
            GridAction::Right => (1, 0),
            GridAction::Up => (0, 1),
            GridAction::Down => (0, -1),
            GridAction::Stay => (0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    pub goal: [usize; 2],
    pub step_reward: f64,
    pub goal_reward: f64,
    pub discount: f64,
}

impl Default for GridWorldSpec {
    fn default() -> Self {
        GridWorldSpec {
            width: 16,
            height: 16,
            goal: [0, 0],
            step_reward: -1.0,
            goal_reward: 9.0,
            discount: 0.9,
        }
    }
}

impl GridWorldSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn state_of(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Index of the absorbing terminal state.
    pub fn terminal_state(&self) -> usize {
        self.n_cells()
    }

    pub fn goal_state(&self) -> usize {
        self.state_of(self.goal[0], self.goal[1])
    }

    /// Manhattan distance of cell `(x, y)` to the goal.
    pub fn distance_to_goal(&self, x: usize, y: usize) -> usize {
        x.abs_diff(self.goal[0]) + y.abs_diff(self.goal[1])
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("grid dimensions must be positive".into()));
        }
        if self.goal[0] >= self.width || self.goal[1] >= self.height {
            return Err(Error::InvalidSpec(format!(
                "goal {:?} outside {}x{} grid",
                self.goal, self.width, self.height
            )));
        }
        if !(self.step_reward.is_finite() && self.goal_reward.is_finite()) {
            return Err(Error::InvalidSpec("rewards must be finite".into()));
        }
        Ok(())
    }
}

pub fn build_grid_world<T: Scalar>(spec: &GridWorldSpec) -> Result<TabularMdp<T>> {
    spec.validate()?;
    let n_states = spec.n_cells() + 1;
    let n_actions = GridAction::ALL.len();
    let terminal = spec.terminal_state();
    let goal = spec.goal_state();
    let mut transition = vec![T::zero(); n_states * n_actions * n_states];
    let mut reward = Matrix::zeros(n_states, n_actions);
    let idx = |s: usize, a: usize, t: usize| (s * n_actions + a) * n_states + t;

    for y in 0..spec.height {
        for x in 0..spec.width {
            let s = spec.state_of(x, y);
            for (a, action) in GridAction::ALL.iter().enumerate() {
                if s == goal {
                    transition[idx(s, a, terminal)] = T::one();
                    reward.set(s, a, T::lit(spec.goal_reward));
                    continue;
                }
                let (dx, dy) = action.delta();
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                let next = if nx < 0 || ny < 0 || nx >= spec.width as i64 || ny >= spec.height as i64 {
                    s
                } else {
                    spec.state_of(nx as usize, ny as usize)
                };
                transition[idx(s, a, next)] = T::one();
                reward.set(s, a, T::lit(spec.step_reward));
            }
        }
    }
    for a in 0..n_actions {
        transition[idx(terminal, a, terminal)] = T::one();
    }
    let mut mask = vec![false; n_states];
    mask[terminal] = true;
    TabularMdp::new(n_states, n_actions, transition, reward, T::lit(spec.discount), mask)
        .map_err(|e| Error::InvalidSpec(e.to_string()))
}
