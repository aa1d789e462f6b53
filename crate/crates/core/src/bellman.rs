//! One-step backups for the mutual-information regularized Bellman operator.
//!
//! The operator couples all states through the state-unconditioned prior, so
//! it is applied by alternating two closed-form updates: the prior becomes the
//! policy's marginal under `p`, and the policy becomes the prior tilted by
//! `exp(beta * advantage)`. Every exponential is evaluated in the log domain
//! with the row maximum factored out.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::mdp::TabularMdp;
use crate::prob::{marginalize_policy, ActionPrior, ConditionalPolicy, Matrix, StateDistribution, ValueTable};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellmanConfig<T> {
    /// Inverse temperature; larger values weaken the information penalty.
    pub beta: T,
    /// Stop the inner alternation once no policy probability moves by this much.
    pub inner_tolerance: T,
    /// Stop value iteration once the sup-norm residual drops below this.
    pub outer_tolerance: T,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
}

impl<T: Scalar> BellmanConfig<T> {
    pub fn with_beta(beta: T) -> Self {
        BellmanConfig {
            beta,
            inner_tolerance: T::lit(5e-3),
            outer_tolerance: T::lit(5e-3),
            max_inner_iters: 10_000,
            max_outer_iters: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: T| x > T::zero() && x.is_finite();
        if !positive(self.beta) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !positive(self.inner_tolerance) || !positive(self.outer_tolerance) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// `R(s, a) + gamma * sum_s' P(s' | s, a) v(s')`.
pub fn advantage_matrix<T: Scalar>(mdp: &TabularMdp<T>, v: &ValueTable<T>) -> Result<Matrix<T>> {
    ensure_len("advantage_matrix values", mdp.n_states(), v.len())?;
    let gamma = mdp.discount();
    let vals = v.values();
    Ok(Matrix::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        let mut next = T::zero();
        for (p, x) in mdp.transition_row(s, a).iter().zip(vals) {
            if *p != T::zero() {
                next += *p * *x;
            }
        }
        mdp.reward().get(s, a) + gamma * next
    }))
}

fn check_prior<T: Scalar>(mdp: &TabularMdp<T>, prior: &ActionPrior<T>) -> Result<()> {
    ensure_len("prior actions", mdp.n_actions(), prior.len())
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta > T::zero() && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("beta must be positive, got {beta}")))
    }
}

/// Value of a fixed prior-policy pair:
/// `E_pi[ adv(s, a) - (1/beta) log(pi(a|s) / prior(a)) ]` per state.
pub fn evaluate_operator<T: Scalar>(
    mdp: &TabularMdp<T>,
    v: &ValueTable<T>,
    prior: &ActionPrior<T>,
    policy: &ConditionalPolicy<T>,
    beta: T,
) -> Result<ValueTable<T>> {
    check_beta(beta)?;
    check_prior(mdp, prior)?;
    ensure_len("policy states", mdp.n_states(), policy.n_states())?;
    ensure_len("policy actions", mdp.n_actions(), policy.n_actions())?;
    let adv = advantage_matrix(mdp, v)?;
    evaluate_from_advantage(&adv, prior, policy, beta).and_then(ValueTable::new)
}

pub(crate) fn evaluate_from_advantage<T: Scalar>(
    adv: &Matrix<T>,
    prior: &ActionPrior<T>,
    policy: &ConditionalPolicy<T>,
    beta: T,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(adv.rows());
    for s in 0..adv.rows() {
        let mut acc = T::zero();
        for (a, (&pa, &x)) in policy.row(s).iter().zip(adv.row(s)).enumerate() {
            if pa == T::zero() {
                continue;
            }
            let q = prior.get(a);
            if q == T::zero() {
                return Err(Error::AbsoluteContinuity { state: s, action: a });
            }
            acc += pa * (x - (pa / q).ln() / beta);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Closed-form maximizer of the evaluation operator for a fixed prior:
/// `pi(a|s) ∝ prior(a) exp(beta * adv(s, a))`.
pub fn optimal_policy_step<T: Scalar>(
    mdp: &TabularMdp<T>,
    v: &ValueTable<T>,
    prior: &ActionPrior<T>,
    beta: T,
) -> Result<ConditionalPolicy<T>> {
    check_beta(beta)?;
    check_prior(mdp, prior)?;
    let adv = advantage_matrix(mdp, v)?;
    tilt(&adv, prior, beta)
}

pub(crate) fn tilt<T: Scalar>(adv: &Matrix<T>, prior: &ActionPrior<T>, beta: T) -> Result<ConditionalPolicy<T>> {
    let mut table = Matrix::zeros(adv.rows(), adv.cols());
    for s in 0..adv.rows() {
        let row = adv.row(s);
        let max = supported_max(row, prior).ok_or(Error::DegeneratePrior { state: s })?;
        let out = table.row_mut(s);
        let mut z = T::zero();
        for (a, (&x, o)) in row.iter().zip(out.iter_mut()).enumerate() {
            let q = prior.get(a);
            if q > T::zero() {
                *o = q * (beta * (x - max)).exp();
                z += *o;
            }
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
    ConditionalPolicy::normalized(table)
}

fn supported_max<T: Scalar>(row: &[T], prior: &ActionPrior<T>) -> Option<T> {
    row.iter()
        .enumerate()
        .filter(|(a, _)| prior.get(*a) > T::zero())
        .map(|(_, x)| *x)
        .fold(None, |m, x| Some(m.map_or(x, |m: T| m.max(x))))
}

/// `(1/beta) log E_prior[exp(beta * adv(s, .))]` per state.
pub fn concise_bellman<T: Scalar>(
    mdp: &TabularMdp<T>,
    v: &ValueTable<T>,
    prior: &ActionPrior<T>,
    beta: T,
) -> Result<ValueTable<T>> {
    check_beta(beta)?;
    check_prior(mdp, prior)?;
    let adv = advantage_matrix(mdp, v)?;
    concise_from_advantage(&adv, prior, beta).and_then(ValueTable::new)
}

pub(crate) fn concise_from_advantage<T: Scalar>(adv: &Matrix<T>, prior: &ActionPrior<T>, beta: T) -> Result<Vec<T>> {
    (0..adv.rows())
        .map(|s| {
            let row = adv.row(s);
            let max = supported_max(row, prior).ok_or(Error::DegeneratePrior { state: s })?;
            // log sum q e^y = log1p(sum q (e^y - 1)) since sum q = 1; y <= 0
            // keeps expm1 in range and stays accurate as beta -> 0.
            let mut acc = T::zero();
            for (a, &x) in row.iter().enumerate() {
                let q = prior.get(a);
                if q > T::zero() {
                    acc += q * (beta * (x - max)).exp_m1();
                }
            }
            Ok(max + acc.max(-T::one()).ln_1p() / beta)
        })
        .collect()
}

/// How the inner alternation refreshes the prior.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorRule<T> {
    /// Marginal of the current policy under `p` (the optimal prior).
    Marginal,
    /// Keep a fixed prior; reduces the operator to the soft backup.
    Frozen(ActionPrior<T>),
}

/// Audit trail of one application of the regularized operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaResult<T> {
    pub policy: ConditionalPolicy<T>,
    pub prior: ActionPrior<T>,
    /// Number of policy updates `M`.
    pub iterations: usize,
    /// `E_p[B_{prior^(m), pi^(m+1)} V]` for `m = 0..M`.
    pub objective_trace: Vec<T>,
    /// `E_p[max_a log(1 / pi^(0)(a|s))] / (M beta)`; infinite when the
    /// initial policy has zeros in a weighted state.
    pub gap_bound: T,
    pub converged: bool,
}

pub fn apply_b_star<T: Scalar>(
    mdp: &TabularMdp<T>,
    v: &ValueTable<T>,
    p: &StateDistribution<T>,
    cfg: &BellmanConfig<T>,
    init: Option<&ConditionalPolicy<T>>,
) -> Result<(ValueTable<T>, BaResult<T>)> {
    apply_b_star_with(mdp, v, p, cfg, init, &PriorRule::Marginal)
}

pub fn apply_b_star_with<T: Scalar>(
    mdp: &TabularMdp<T>,
    v: &ValueTable<T>,
    p: &StateDistribution<T>,
    cfg: &BellmanConfig<T>,
    init: Option<&ConditionalPolicy<T>>,
    rule: &PriorRule<T>,
) -> Result<(ValueTable<T>, BaResult<T>)> {
    cfg.validate()?;
    ensure_len("state distribution", mdp.n_states(), p.len())?;
    if let PriorRule::Frozen(prior) = rule {
        check_prior(mdp, prior)?;
    }
    let adv = advantage_matrix(mdp, v)?;
    let mut policy = match init {
        Some(pi) => {
            ensure_len("initial policy states", mdp.n_states(), pi.n_states())?;
            ensure_len("initial policy actions", mdp.n_actions(), pi.n_actions())?;
            pi.clone()
        }
        None => ConditionalPolicy::uniform(mdp.n_states(), mdp.n_actions()),
    };
    let log_init_bound = initial_log_bound(&policy, p).unwrap_or(T::infinity());

    let mut trace = Vec::new();
    let mut converged = false;
    let mut last: Option<(ActionPrior<T>, Vec<T>)> = None;
    for m in 0..cfg.max_inner_iters {
        let prior = match rule {
            PriorRule::Marginal => marginalize_policy(&policy, p)?,
            PriorRule::Frozen(prior) => prior.clone(),
        };
        let next = tilt(&adv, &prior, cfg.beta)?;
        let values = concise_from_advantage(&adv, &prior, cfg.beta)?;
        let objective = p.expect(&values);
        if !objective.is_finite() || values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure {
                what: "regularized backup",
                iteration: m,
            });
        }
        trace.push(objective);
        let delta = next.max_abs_diff(&policy);
        policy = next;
        last = Some((prior, values));
        if delta < cfg.inner_tolerance {
            converged = true;
            break;
        }
    }
    let (prior, values) = last.expect("at least one inner iteration");
    let iterations = trace.len();
    let gap_bound = log_init_bound / (T::from_usize(iterations).unwrap() * cfg.beta);
    Ok((
        ValueTable::new(values)?,
        BaResult {
            policy,
            prior,
            iterations,
            objective_trace: trace,
            gap_bound,
            converged,
        },
    ))
}

fn initial_log_bound<T: Scalar>(init: &ConditionalPolicy<T>, p: &StateDistribution<T>) -> Result<T> {
    let mut acc = T::zero();
    for s in 0..init.n_states() {
        let w = p.get(s);
        if w == T::zero() {
            continue;
        }
        let row = init.row(s);
        let (action, min) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::infinity()), |best, (a, x)| if x < best.1 { (a, x) } else { best });
        if min <= T::zero() {
            return Err(Error::InfiniteBound { state: s, action });
        }
        acc += w * (-min.ln());
    }
    Ok(acc)
}

/// Bound on the averaged optimality gap after `m` alternations started from `init`.
pub fn gap_bound<T: Scalar>(init: &ConditionalPolicy<T>, p: &StateDistribution<T>, beta: T, m: usize) -> Result<T> {
    check_beta(beta)?;
    ensure_len("gap_bound states", init.n_states(), p.len())?;
    if m == 0 {
        return Err(Error::Config("iteration count must be at least 1".into()));
    }
    Ok(initial_log_bound(init, p)? / (T::from_usize(m).unwrap() * beta))
}

/// Non-sequential problem: maximize `E_p E_pi[reward] - (1/beta) I(S; A)`.
pub fn rate_distortion_solve<T: Scalar>(
    reward: &Matrix<T>,
    p: &StateDistribution<T>,
    beta: T,
    cfg: &BellmanConfig<T>,
) -> Result<BaResult<T>> {
    let (ns, na) = (reward.rows(), reward.cols());
    // Self-loops with v = 0 make the advantage equal to the reward for any discount.
    let mut transition = vec![T::zero(); ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            transition[(s * na + a) * ns + s] = T::one();
        }
    }
    let mdp = TabularMdp::new(ns, na, transition, reward.clone(), T::lit(0.5), vec![false; ns])?;
    let cfg = BellmanConfig { beta, ..cfg.clone() };
    apply_b_star(&mdp, &ValueTable::zeros(ns), p, &cfg, None).map(|(_, ba)| ba)
}
