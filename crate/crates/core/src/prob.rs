//! Probability primitives over finite state and action sets.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::scalar::{xlogy_ratio, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        ensure_len("matrix data", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            ensure_len("matrix row", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }
}

fn check_simplex<T: Scalar>(what: &'static str, probs: &[T]) -> Result<()> {
    let mut sum = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < T::zero() || p > T::one() {
            return Err(Error::InvalidDistribution {
                what,
                reason: format!("entry {i} = {p} outside [0, 1]"),
            });
        }
        sum += p;
    }
    if (sum - T::one()).abs() > T::prob_tolerance() {
        return Err(Error::InvalidDistribution {
            what,
            reason: format!("entries sum to {sum}"),
        });
    }
    Ok(())
}

/// Rescales `probs` onto the simplex when its sum is within the repair
/// tolerance of 1, otherwise reports an invariant violation.
pub fn renormalize<T: Scalar>(what: &'static str, probs: &mut [T]) -> Result<()> {
    let sum: T = probs.iter().copied().sum();
    if probs.iter().any(|p| !p.is_finite() || *p < T::zero()) {
        return Err(Error::InvalidDistribution {
            what,
            reason: "negative or non-finite entry".into(),
        });
    }
    if (sum - T::one()).abs() > T::renorm_tolerance() {
        return Err(Error::InvalidDistribution {
            what,
            reason: format!("entries sum to {sum}, too far from 1 to renormalize"),
        });
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    Ok(())
}

macro_rules! simplex_vector {
    ($(#[$doc:meta])* $name:ident, $what:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name<T> {
            probs: Vec<T>,
        }

        impl<T: Scalar> $name<T> {
            pub fn new(probs: Vec<T>) -> Result<Self> {
                if probs.is_empty() {
                    return Err(Error::InvalidDistribution {
                        what: $what,
                        reason: "empty support".into(),
                    });
                }
                check_simplex($what, &probs)?;
                Ok($name { probs })
            }

            /// Accepts small normalization drift and rescales it away.
            pub fn normalized(mut probs: Vec<T>) -> Result<Self> {
                renormalize($what, &mut probs)?;
                Self::new(probs)
            }

            pub fn uniform(n: usize) -> Self {
                let w = T::one() / T::from_usize(n).unwrap();
                $name { probs: vec![w; n] }
            }

            pub fn point_mass(n: usize, at: usize) -> Self {
                let mut probs = vec![T::zero(); n];
                probs[at] = T::one();
                $name { probs }
            }

            pub fn len(&self) -> usize {
                self.probs.len()
            }

            pub fn is_empty(&self) -> bool {
                self.probs.is_empty()
            }

            pub fn probs(&self) -> &[T] {
                &self.probs
            }

            pub fn get(&self, i: usize) -> T {
                self.probs[i]
            }
        }
    };
}

simplex_vector!(
    /// State-unconditioned action distribution (a prior or a marginal policy).
    ActionPrior,
    "action prior"
);
simplex_vector!(
    /// Fixed weighting over states used for marginalization and expectations.
    StateDistribution,
    "state distribution"
);

impl<T: Scalar> StateDistribution<T> {
    /// Uniform over states whose mask entry is `false`.
    pub fn uniform_over_unmasked(mask: &[bool]) -> Result<Self> {
        let free = mask.iter().filter(|m| !**m).count();
        if free == 0 {
            return Err(Error::InvalidDistribution {
                what: "state distribution",
                reason: "every state is masked".into(),
            });
        }
        let w = T::one() / T::from_usize(free).unwrap();
        Ok(StateDistribution {
            probs: mask.iter().map(|&m| if m { T::zero() } else { w }).collect(),
        })
    }

    /// `sum_s p(s) f(s)` accumulated in state order.
    pub fn expect(&self, values: &[T]) -> T {
        let mut acc = T::zero();
        for (p, v) in self.probs.iter().zip(values) {
            if *p != T::zero() {
                acc += *p * *v;
            }
        }
        acc
    }
}

/// Row-stochastic `S x A` matrix of action probabilities per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPolicy<T> {
    table: Matrix<T>,
}

impl<T: Scalar> ConditionalPolicy<T> {
    pub fn new(table: Matrix<T>) -> Result<Self> {
        if table.rows() == 0 || table.cols() == 0 {
            return Err(Error::InvalidDistribution {
                what: "conditional policy",
                reason: "empty table".into(),
            });
        }
        for s in 0..table.rows() {
            check_simplex("conditional policy row", table.row(s))?;
        }
        Ok(ConditionalPolicy { table })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Renormalizes every row within the repair tolerance before validating.
    pub fn normalized(mut table: Matrix<T>) -> Result<Self> {
        for s in 0..table.rows() {
            renormalize("conditional policy row", table.row_mut(s))?;
        }
        Self::new(table)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let w = T::one() / T::from_usize(n_actions).unwrap();
        ConditionalPolicy {
            table: Matrix::from_fn(n_states, n_actions, |_, _| w),
        }
    }

    /// Every state uses the same action distribution.
    pub fn state_independent(n_states: usize, row: &ActionPrior<T>) -> Self {
        ConditionalPolicy {
            table: Matrix::from_fn(n_states, row.len(), |_, a| row.get(a)),
        }
    }

    pub fn n_states(&self) -> usize {
        self.table.rows()
    }

    pub fn n_actions(&self) -> usize {
        self.table.cols()
    }

    pub fn row(&self, s: usize) -> &[T] {
        self.table.row(s)
    }

    pub fn get(&self, s: usize, a: usize) -> T {
        self.table.get(s, a)
    }

    pub fn table(&self) -> &Matrix<T> {
        &self.table
    }

    /// Largest absolute change of any single probability.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.table.max_abs_diff(&other.table)
    }
}

/// Real value per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable<T> {
    values: Vec<T>,
}

impl<T: Scalar> ValueTable<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution {
                what: "value table",
                reason: format!("entry {i} is not finite"),
            });
        }
        Ok(ValueTable { values })
    }

    pub fn zeros(n: usize) -> Self {
        ValueTable {
            values: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, s: usize) -> T {
        self.values[s]
    }

    /// Infinity-norm distance.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn mean(&self) -> T {
        let n = T::from_usize(self.values.len()).unwrap();
        self.values.iter().copied().sum::<T>() / n
    }
}

/// `D_KL(p || q)` with `0 log 0 = 0`.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<T> {
    ensure_len("kl_divergence", p.len(), q.len())?;
    let mut acc = T::zero();
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        acc += xlogy_ratio(pi, qi).ok_or(Error::InfiniteDivergence { index: i })?;
    }
    // Rounding can push a zero divergence slightly negative.
    Ok(acc.max(T::zero()))
}

/// `sum_s pi(a|s) p(s)`, summed in state order.
pub fn marginalize_policy<T: Scalar>(
    policy: &ConditionalPolicy<T>,
    p: &StateDistribution<T>,
) -> Result<ActionPrior<T>> {
    ensure_len("marginalize_policy", policy.n_states(), p.len())?;
    let mut out = vec![T::zero(); policy.n_actions()];
    for s in 0..policy.n_states() {
        let w = p.get(s);
        if w == T::zero() {
            continue;
        }
        for (o, &pa) in out.iter_mut().zip(policy.row(s)) {
            *o += w * pa;
        }
    }
    ActionPrior::normalized(out)
}

/// `E_p[ D_KL(pi(.|s) || prior) ]`.
pub fn expected_kl<T: Scalar>(
    policy: &ConditionalPolicy<T>,
    prior: &ActionPrior<T>,
    p: &StateDistribution<T>,
) -> Result<T> {
    ensure_len("expected_kl states", policy.n_states(), p.len())?;
    ensure_len("expected_kl actions", policy.n_actions(), prior.len())?;
    let mut acc = T::zero();
    for s in 0..policy.n_states() {
        let w = p.get(s);
        if w == T::zero() {
            continue;
        }
        acc += w * kl_divergence(policy.row(s), prior.probs())?;
    }
    Ok(acc)
}

/// Mutual information between states and actions under `p` and `policy`.
pub fn mutual_information<T: Scalar>(
    policy: &ConditionalPolicy<T>,
    p: &StateDistribution<T>,
) -> Result<T> {
    let marginal = marginalize_policy(policy, p)?;
    // The marginal dominates every row with positive state weight, so the
    // divergence is always finite here.
    expected_kl(policy, &marginal, p)
}
