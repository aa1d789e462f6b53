//! Randomized audit of the regularized operator against brute-force oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bellman::{
    advantage_matrix, apply_b_star, concise_bellman, evaluate_operator, optimal_policy_step, BellmanConfig,
};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::oracle;
use crate::prob::{marginalize_policy, ActionPrior, ConditionalPolicy, Matrix, StateDistribution, ValueTable};

/// A random small problem: MDP, value function, state weighting and `beta`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: TabularMdp<f64>,
    pub v: ValueTable<f64>,
    pub p: StateDistribution<f64>,
    pub beta: f64,
}

fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    // Exponential draws normalize to a flat Dirichlet sample.
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Dense random MDP with rewards and values in `[-1, 1]`, `gamma = 0.9` and
/// `beta` log-uniform in `[0.5, 5]`.
pub fn random_instance(rng: &mut impl Rng, n_states: usize, n_actions: usize) -> Instance {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(random_simplex(rng, n_states));
    }
    let reward = Matrix::from_fn(n_states, n_actions, |_, _| rng.random_range(-1.0..1.0));
    let mdp = TabularMdp::new(n_states, n_actions, transition, reward, 0.9, vec![false; n_states])
        .expect("random MDP is valid");
    let v = ValueTable::new((0..n_states).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let p = StateDistribution::normalized(random_simplex(rng, n_states)).unwrap();
    let beta = (rng.random_range(0.5f64.ln()..5f64.ln())).exp();
    Instance { mdp, v, p, beta }
}

pub fn random_policy(rng: &mut impl Rng, n_states: usize, n_actions: usize) -> ConditionalPolicy<f64> {
    let rows: Vec<Vec<f64>> = (0..n_states).map(|_| random_simplex(rng, n_actions)).collect();
    let table = Matrix::from_rows(&rows).unwrap();
    ConditionalPolicy::normalized(table).unwrap()
}

pub fn random_prior(rng: &mut impl Rng, n_actions: usize) -> ActionPrior<f64> {
    ActionPrior::normalized(random_simplex(rng, n_actions)).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub instances: usize,
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    /// Iteration count used for the rate-bound check.
    pub bound_iterations: usize,
    pub perturbations: usize,
    /// Test hook: run the solver on sign-flipped rewards so checks must fail.
    pub inject_sign_flip: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            instances: 50,
            seed: 0,
            n_states: 2,
            n_actions: 2,
            bound_iterations: 50,
            perturbations: 100,
            inject_sign_flip: false,
        }
    }
}

impl AuditConfig {
    /// Oracle grid resolution: 1e-3 for two actions, 1e-2 for three.
    pub fn resolution(&self) -> f64 {
        if self.n_actions <= 2 {
            1e-3
        } else {
            1e-2
        }
    }

    fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.bound_iterations == 0 {
            return Err(Error::Config("instances and bound_iterations must be positive".into()));
        }
        if !(1..=3).contains(&self.n_states) || !(2..=3).contains(&self.n_actions) {
            return Err(Error::Config("audit supports 1-3 states and 2-3 actions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub instances: usize,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub violations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub oracle_resolution: f64,
    pub monotonicity_violations: usize,
    pub checks: Vec<AuditCheck>,
    pub passed: bool,
}

struct Tally {
    name: &'static str,
    tolerance: f64,
    count: usize,
    worst: f64,
    violations: usize,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally {
            name,
            tolerance,
            count: 0,
            worst: 0.0,
            violations: 0,
        }
    }

    /// Records an excess over the tolerance-free target; `excess > tolerance` fails.
    fn record(&mut self, excess: f64) {
        self.count += 1;
        if excess.is_nan() || excess > self.tolerance {
            self.violations += 1;
        }
        if excess.is_nan() || excess > self.worst {
            self.worst = excess;
        }
    }

    fn finish(self) -> AuditCheck {
        AuditCheck {
            name: self.name.to_string(),
            instances: self.count,
            max_discrepancy: self.worst,
            tolerance: self.tolerance,
            violations: self.violations,
            passed: self.violations == 0,
        }
    }
}

fn flip(inst: &Instance) -> (TabularMdp<f64>, ValueTable<f64>) {
    let r = inst.mdp.reward();
    let neg = Matrix::from_fn(r.rows(), r.cols(), |s, a| -r.get(s, a));
    let mdp = TabularMdp::new(
        inst.mdp.n_states(),
        inst.mdp.n_actions(),
        inst.mdp.transition_tensor().to_vec(),
        neg,
        inst.mdp.discount(),
        inst.mdp.terminal_mask().to_vec(),
    )
    .unwrap();
    let v = ValueTable::new(inst.v.values().iter().map(|x| -x).collect()).unwrap();
    (mdp, v)
}

pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let resolution = cfg.resolution();
    let log_a = (cfg.n_actions as f64).ln();

    let mut vs_oracle = Tally::new("blahut_arimoto_vs_brute_force", 1e-3);
    let mut monotone = Tally::new("objective_monotonicity", 1e-10);
    let mut rate = Tally::new("averaged_gap_within_rate_bound", 0.0);
    let mut concise = Tally::new("concise_form_identity", 1e-9);
    let mut policy_opt = Tally::new("closed_form_policy_beats_grid", 1e-12);
    let mut prior_opt = Tally::new("marginal_prior_beats_perturbations", 1e-12);
    let mut conditioning = Tally::new("conditioning_increases_divergence", 1e-12);
    let mut monotonicity_violations = 0;

    for _ in 0..cfg.instances {
        let inst = random_instance(&mut rng, cfg.n_states, cfg.n_actions);
        let (mdp, v) = if cfg.inject_sign_flip {
            flip(&inst)
        } else {
            (inst.mdp.clone(), inst.v.clone())
        };
        let optimum = oracle::brute_force_b_star(&inst.mdp, inst.v.values(), inst.p.probs(), inst.beta, resolution);

        // Converged run against the oracle.
        let tight = BellmanConfig {
            inner_tolerance: 1e-10,
            max_inner_iters: 200_000,
            ..BellmanConfig::with_beta(inst.beta)
        };
        let (values, ba) = apply_b_star(&mdp, &v, &inst.p, &tight, None)?;
        vs_oracle.record((inst.p.expect(values.values()) - optimum.value).abs());
        for w in ba.objective_trace.windows(2) {
            let drop = w[0] - w[1];
            monotone.record(drop.max(0.0));
            if drop > 1e-10 {
                monotonicity_violations += 1;
            }
        }

        // Fixed-length run for the rate bound.
        let fixed = BellmanConfig {
            inner_tolerance: f64::MIN_POSITIVE,
            max_inner_iters: cfg.bound_iterations,
            ..BellmanConfig::with_beta(inst.beta)
        };
        let (_, short) = apply_b_star(&mdp, &v, &inst.p, &fixed, None)?;
        let mut cumulative = 0.0;
        for (m, obj) in short.objective_trace.iter().enumerate() {
            cumulative += optimum.value - obj;
            let count = (m + 1) as f64;
            let bound = log_a / (count * inst.beta);
            rate.record(cumulative / count - bound);
        }

        // Concise-form identity and closed-form policy optimality for a random prior.
        let prior = random_prior(&mut rng, cfg.n_actions);
        let pi = optimal_policy_step(&mdp, &v, &prior, inst.beta)?;
        let two_step = evaluate_operator(&mdp, &v, &prior, &pi, inst.beta)?;
        let one_step = concise_bellman(&mdp, &v, &prior, inst.beta)?;
        concise.record(one_step.max_abs_diff(&two_step));

        let adv = oracle::naive_advantage(&inst.mdp, inst.v.values());
        for (s, row) in adv.iter().enumerate() {
            let closed = oracle::state_objective(row, prior.probs(), pi.row(s), inst.beta);
            let (_, grid) = oracle::grid_best_row(row, prior.probs(), inst.beta, 100);
            policy_opt.record(grid - closed);
        }

        // Marginal prior optimality against random perturbations.
        let policy_rows: Vec<Vec<f64>> = (0..cfg.n_states).map(|s| ba.policy.row(s).to_vec()).collect();
        let best_prior = marginalize_policy(&ba.policy, &inst.p)?;
        let solver_adv = advantage_matrix(&inst.mdp, &inst.v)?;
        let adv_rows: Vec<Vec<f64>> = (0..cfg.n_states).map(|s| solver_adv.row(s).to_vec()).collect();
        let base = oracle::expected_evaluation(&adv_rows, best_prior.probs(), &policy_rows, inst.p.probs(), inst.beta);
        for _ in 0..cfg.perturbations {
            let noise = random_prior(&mut rng, cfg.n_actions);
            let mix = rng.random_range(0.0..1.0);
            let perturbed: Vec<f64> = best_prior
                .probs()
                .iter()
                .zip(noise.probs())
                .map(|(a, b)| (1.0 - mix) * a + mix * b)
                .collect();
            let val = oracle::expected_evaluation(&adv_rows, &perturbed, &policy_rows, inst.p.probs(), inst.beta);
            prior_opt.record(val - base);
        }

        let a = random_policy(&mut rng, cfg.n_states, cfg.n_actions);
        let b = random_policy(&mut rng, cfg.n_states, cfg.n_actions);
        let rows = |pi: &ConditionalPolicy<f64>| (0..cfg.n_states).map(|s| pi.row(s).to_vec()).collect::<Vec<_>>();
        conditioning.record(-oracle::conditioning_gap(&rows(&a), &rows(&b), inst.p.probs()));
    }

    let checks: Vec<AuditCheck> = [vs_oracle, monotone, rate, concise, policy_opt, prior_opt, conditioning]
        .into_iter()
        .map(Tally::finish)
        .collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(AuditReport {
        config: cfg.clone(),
        oracle_resolution: resolution,
        monotonicity_violations,
        checks,
        passed,
    })
}
