//! Outer value-iteration drivers and the inverse-temperature sweep.

use serde::Serialize;

use crate::bellman::{
    advantage_matrix, apply_b_star_with, concise_from_advantage, tilt, BellmanConfig, PriorRule,
};
use crate::error::{ensure_len, Error, Result};
use crate::mdp::TabularMdp;
use crate::prob::{
    marginalize_policy, mutual_information, ActionPrior, ConditionalPolicy, Matrix, StateDistribution, ValueTable,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum ViMode<T> {
    /// Hard max backup.
    Standard,
    /// Soft backup against a fixed prior.
    SoftFixedPrior(ActionPrior<T>),
    /// Regularized backup, prior re-optimized every sweep.
    MutualInformation,
    /// Regularized driver with the marginalization step replaced by a fixed
    /// prior. Numerically identical to `SoftFixedPrior` with the same prior.
    FrozenPrior(ActionPrior<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViResult<T> {
    pub values: ValueTable<T>,
    pub sweeps: usize,
    pub residual_trace: Vec<T>,
    pub final_policy: ConditionalPolicy<T>,
    pub final_prior: ActionPrior<T>,
    pub converged: bool,
    /// Inner alternation counts per sweep (regularized modes only).
    pub inner_iterations: Vec<usize>,
}

/// Iterates the backup selected by `mode` from `v = 0` until the sup-norm
/// residual falls below `cfg.outer_tolerance` or the sweep budget runs out.
/// Running out of sweeps is reported through `converged`, not as an error.
pub fn value_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    p: &StateDistribution<T>,
    cfg: &BellmanConfig<T>,
    mode: &ViMode<T>,
) -> Result<ViResult<T>> {
    cfg.validate()?;
    ensure_len("state distribution", mdp.n_states(), p.len())?;
    if let ViMode::SoftFixedPrior(prior) | ViMode::FrozenPrior(prior) = mode {
        ensure_len("prior actions", mdp.n_actions(), prior.len())?;
    }
    let mut v = ValueTable::zeros(mdp.n_states());
    let mut residuals = Vec::new();
    let mut inner = Vec::new();
    let mut warm: Option<ConditionalPolicy<T>> = None;
    let mut last_pair: Option<(ConditionalPolicy<T>, ActionPrior<T>)> = None;
    let mut converged = false;

    for sweep in 0..cfg.max_outer_iters {
        let next = match mode {
            ViMode::Standard => {
                let adv = advantage_matrix(mdp, &v)?;
                (0..adv.rows())
                    .map(|s| adv.row(s).iter().copied().fold(T::neg_infinity(), T::max))
                    .collect()
            }
            ViMode::SoftFixedPrior(prior) => {
                let adv = advantage_matrix(mdp, &v)?;
                concise_from_advantage(&adv, prior, cfg.beta)?
            }
            ViMode::MutualInformation | ViMode::FrozenPrior(_) => {
                let rule = match mode {
                    ViMode::FrozenPrior(prior) => PriorRule::Frozen(prior.clone()),
                    _ => PriorRule::Marginal,
                };
                let (values, ba) = apply_b_star_with(mdp, &v, p, cfg, warm.as_ref(), &rule)?;
                inner.push(ba.iterations);
                warm = Some(ba.policy.clone());
                last_pair = Some((ba.policy, ba.prior));
                values.values().to_vec()
            }
        };
        if next.iter().any(|x: &T| !x.is_finite()) {
            return Err(Error::NumericalFailure {
                what: "value iterate",
                iteration: sweep,
            });
        }
        let next = ValueTable::new(next)?;
        let residual = next.max_abs_diff(&v);
        residuals.push(residual);
        v = next;
        if residual < cfg.outer_tolerance {
            converged = true;
            break;
        }
    }

    let (final_policy, final_prior) = match mode {
        ViMode::Standard => {
            let pi = greedy_policy(&advantage_matrix(mdp, &v)?)?;
            let prior = marginalize_policy(&pi, p)?;
            (pi, prior)
        }
        ViMode::SoftFixedPrior(prior) => (tilt(&advantage_matrix(mdp, &v)?, prior, cfg.beta)?, prior.clone()),
        _ => last_pair.expect("at least one sweep"),
    };
    Ok(ViResult {
        values: v,
        sweeps: residuals.len(),
        residual_trace: residuals,
        final_policy,
        final_prior,
        converged,
        inner_iterations: inner,
    })
}

/// One-hot argmax per state; ties go to the lowest action index.
pub fn greedy_policy<T: Scalar>(adv: &Matrix<T>) -> Result<ConditionalPolicy<T>> {
    let mut table = Matrix::zeros(adv.rows(), adv.cols());
    for s in 0..adv.rows() {
        let row = adv.row(s);
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] > row[best] {
                best = a;
            }
        }
        table.set(s, best, T::one());
    }
    ConditionalPolicy::new(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Soft,
    MutualInformation,
}

impl SweepMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepMode::Soft => "soft",
            SweepMode::MutualInformation => "mutual_information",
        }
    }
}

/// Summary of one value-iteration run in a sweep. `error` is set when the
/// run failed; the numeric fields are then NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub mode: SweepMode,
    pub expected_value: f64,
    pub mean_value: f64,
    pub mutual_information: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Soft (uniform prior) and regularized value iteration for every `beta`.
/// Rows come out ordered by `betas`, soft before regularized.
pub fn beta_sweep<T: Scalar>(
    mdp: &TabularMdp<T>,
    p: &StateDistribution<T>,
    betas: &[T],
    cfg: &BellmanConfig<T>,
) -> Result<Vec<SweepRow>> {
    if betas.is_empty() {
        return Err(Error::Config("beta sweep needs at least one beta".into()));
    }
    let uniform = ActionPrior::uniform(mdp.n_actions());
    let mut rows = Vec::with_capacity(2 * betas.len());
    for &beta in betas {
        let cfg = BellmanConfig { beta, ..cfg.clone() };
        for (mode, vi_mode) in [
            (SweepMode::Soft, ViMode::SoftFixedPrior(uniform.clone())),
            (SweepMode::MutualInformation, ViMode::MutualInformation),
        ] {
            let outcome = value_iteration(mdp, p, &cfg, &vi_mode).and_then(|r| {
                let mi = mutual_information(&r.final_policy, p)?;
                Ok((r, mi))
            });
            rows.push(match outcome {
                Ok((r, mi)) => SweepRow {
                    beta: beta.as_f64(),
                    mode,
                    expected_value: p.expect(r.values.values()).as_f64(),
                    mean_value: r.values.mean().as_f64(),
                    mutual_information: mi.as_f64(),
                    sweeps: r.sweeps,
                    converged: r.converged,
                    error: None,
                },
                Err(e) => SweepRow {
                    beta: beta.as_f64(),
                    mode,
                    expected_value: f64::NAN,
                    mean_value: f64::NAN,
                    mutual_information: f64::NAN,
                    sweeps: 0,
                    converged: false,
                    error: Some(e.to_string()),
                },
            });
        }
    }
    Ok(rows)
}
