use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::prob::Matrix;
use crate::scalar::Scalar;

/// Finite MDP with dense transition tensor `P[s][a][s']`, reward matrix
/// `R[s][a]` and a discount strictly inside `(0, 1)`.
///
/// Terminal states must self-loop with probability one and pay zero reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp<T> {
    n_states: usize,
    n_actions: usize,
    transition: Vec<T>,
    reward: Matrix<T>,
    discount: T,
    terminal: Vec<bool>,
}

impl<T: Scalar> TabularMdp<T> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<T>,
        reward: Matrix<T>,
        discount: T,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("state and action counts must be positive".into()));
        }
        ensure_len("transition tensor", n_states * n_actions * n_states, transition.len())?;
        ensure_len("reward rows", n_states, reward.rows())?;
        ensure_len("reward columns", n_actions, reward.cols())?;
        ensure_len("terminal mask", n_states, terminal.len())?;
        if !(discount > T::zero() && discount < T::one()) {
            return Err(Error::InvalidMdp(format!("discount {discount} not in (0, 1)")));
        }
        let mdp = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            terminal,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = mdp.transition_row(s, a);
                let mut sum = T::zero();
                for &p in row {
                    if !p.is_finite() || p < T::zero() {
                        return Err(Error::InvalidMdp(format!(
                            "transition ({s}, {a}) has a negative or non-finite entry"
                        )));
                    }
                    sum += p;
                }
                if (sum - T::one()).abs() > T::prob_tolerance() {
                    return Err(Error::InvalidMdp(format!(
                        "transition ({s}, {a}) sums to {sum}"
                    )));
                }
                let r = mdp.reward.get(s, a);
                if !r.is_finite() {
                    return Err(Error::InvalidMdp(format!("reward ({s}, {a}) is not finite")));
                }
                if mdp.terminal[s] && (row[s] != T::one() || r != T::zero()) {
                    return Err(Error::InvalidMdp(format!(
                        "terminal state {s} must self-loop with zero reward"
                    )));
                }
            }
        }
        Ok(mdp)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> T {
        self.discount
    }

    pub fn reward(&self) -> &Matrix<T> {
        &self.reward
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// `P(. | s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn transition_tensor(&self) -> &[T] {
        &self.transition
    }

    /// Same MDP with state `s` renamed to `perm[s]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n_states)?;
        let (ns, na) = (self.n_states, self.n_actions);
        let mut transition = vec![T::zero(); self.transition.len()];
        let mut reward = Matrix::zeros(ns, na);
        let mut terminal = vec![false; ns];
        for s in 0..ns {
            terminal[perm[s]] = self.terminal[s];
            for a in 0..na {
                reward.set(perm[s], a, self.reward.get(s, a));
                let src = self.transition_row(s, a);
                let base = (perm[s] * na + a) * ns;
                for (t, &p) in src.iter().enumerate() {
                    transition[base + perm[t]] = p;
                }
            }
        }
        TabularMdp::new(ns, na, transition, reward, self.discount, terminal)
    }

    /// Same MDP with action `a` renamed to `perm[a]`.
    pub fn permute_actions(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n_actions)?;
        let (ns, na) = (self.n_states, self.n_actions);
        let mut transition = vec![T::zero(); self.transition.len()];
        let mut reward = Matrix::zeros(ns, na);
        for s in 0..ns {
            for a in 0..na {
                reward.set(s, perm[a], self.reward.get(s, a));
                let base = (s * na + perm[a]) * ns;
                transition[base..base + ns].copy_from_slice(self.transition_row(s, a));
            }
        }
        TabularMdp::new(ns, na, transition, reward, self.discount, self.terminal.clone())
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    ensure_len("permutation", n, perm.len())?;
    let mut seen = vec![false; n];
    for &i in perm {
        if i >= n || seen[i] {
            return Err(Error::Config(format!("not a permutation of 0..{n}")));
        }
        seen[i] = true;
    }
    Ok(())
}
