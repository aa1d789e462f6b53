//! Brute-force reference computations for small instances.
//!
//! Everything here works on plain `f64` slices with direct loops and shares no
//! code with the solvers in [`crate::bellman`], so it can be used to check them.

use crate::mdp::TabularMdp;

/// All points of the probability simplex over `n` outcomes whose coordinates
/// are multiples of `1 / steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == n {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, steps, steps, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Number of grid steps for a resolution such as `1e-3`.
pub fn steps_for(resolution: f64) -> usize {
    (1.0 / resolution).round() as usize
}

/// `R(s, a) + gamma * sum_s' P(s'|s, a) v(s')` by triple loop.
pub fn naive_advantage(mdp: &TabularMdp<f64>, v: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; mdp.n_actions()]; mdp.n_states()];
    for (s, row) in out.iter_mut().enumerate() {
        for (a, cell) in row.iter_mut().enumerate() {
            let mut ev = 0.0;
            for (t, vt) in v.iter().enumerate() {
                ev += mdp.transition_row(s, a)[t] * vt;
            }
            *cell = mdp.reward().get(s, a) + mdp.discount() * ev;
        }
    }
    out
}

/// Per-state regularized objective of a single policy row against a prior.
/// Returns `-inf` when the row puts mass outside the prior's support.
pub fn state_objective(adv: &[f64], prior: &[f64], row: &[f64], beta: f64) -> f64 {
    let mut total = 0.0;
    for a in 0..adv.len() {
        if row[a] <= 0.0 {
            continue;
        }
        if prior[a] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += row[a] * adv[a] - row[a] * (row[a] / prior[a]).ln() / beta;
    }
    total
}

/// Best policy row on a simplex grid for one state.
pub fn grid_best_row(adv: &[f64], prior: &[f64], beta: f64, steps: usize) -> (Vec<f64>, f64) {
    simplex_grid(adv.len(), steps)
        .into_iter()
        .map(|row| {
            let v = state_objective(adv, prior, &row, beta);
            (row, v)
        })
        .fold((Vec::new(), f64::NEG_INFINITY), |best, cand| if cand.1 > best.1 { cand } else { best })
}

/// Exact per-state optimum over policy rows for a fixed prior (Gibbs
/// variational principle), computed with a plain shifted log-sum-exp.
pub fn gibbs_value(adv: &[f64], prior: &[f64], beta: f64) -> f64 {
    let shift = adv
        .iter()
        .zip(prior)
        .filter(|(_, q)| **q > 0.0)
        .map(|(x, _)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = adv
        .iter()
        .zip(prior)
        .filter(|(_, q)| **q > 0.0)
        .map(|(x, q)| q * (beta * (x - shift)).exp())
        .sum();
    shift + z.ln() / beta
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    /// Largest `E_p[B_{prior, pi} V]` found on the grid.
    pub value: f64,
    pub prior: Vec<f64>,
    pub resolution: f64,
}

/// `E_p[B* V]` by scanning priors on a simplex grid with the exact policy
/// response inside.
pub fn brute_force_b_star(mdp: &TabularMdp<f64>, v: &[f64], p: &[f64], beta: f64, resolution: f64) -> OracleOptimum {
    let adv = naive_advantage(mdp, v);
    let mut best = OracleOptimum {
        value: f64::NEG_INFINITY,
        prior: Vec::new(),
        resolution,
    };
    for prior in simplex_grid(mdp.n_actions(), steps_for(resolution)) {
        let mut total = 0.0;
        for (s, w) in p.iter().enumerate() {
            if *w > 0.0 {
                total += w * gibbs_value(&adv[s], &prior, beta);
            }
        }
        if total > best.value {
            best.value = total;
            best.prior = prior;
        }
    }
    best
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| if *b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum()
}

fn marginal(rows: &[Vec<f64>], p: &[f64]) -> Vec<f64> {
    let mut m = vec![0.0; rows[0].len()];
    for (row, w) in rows.iter().zip(p) {
        for (mi, x) in m.iter_mut().zip(row) {
            *mi += w * x;
        }
    }
    m
}

/// `E_p[KL(a(.|s) || b(.|s))] - KL(marginal(a) || marginal(b))`, which is
/// never negative.
pub fn conditioning_gap(a: &[Vec<f64>], b: &[Vec<f64>], p: &[f64]) -> f64 {
    let conditional: f64 = a
        .iter()
        .zip(b)
        .zip(p)
        .filter(|(_, w)| **w > 0.0)
        .map(|((ra, rb), w)| w * kl(ra, rb))
        .sum();
    conditional - kl(&marginal(a, p), &marginal(b, p))
}

/// `E_p[B_{prior, pi} V]` by direct summation.
pub fn expected_evaluation(adv: &[Vec<f64>], prior: &[f64], policy: &[Vec<f64>], p: &[f64], beta: f64) -> f64 {
    adv.iter()
        .zip(policy)
        .zip(p)
        .filter(|(_, w)| **w > 0.0)
        .map(|((row, pi), w)| w * state_objective(row, prior, pi, beta))
        .sum()
}
