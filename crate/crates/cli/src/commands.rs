use std::path::Path;

use mireg_agent::{train, write_curve_csv, CurveRow, MiracleConfig, PriorMode, TrainOutcome};
use mireg_core::audit::run_audit;
use mireg_core::mdp_io::read_mdp;
use mireg_core::{
    apply_b_star, beta_sweep, build_grid_world, gap_bound, mutual_information, rate_distortion_solve,
    value_iteration, ActionPrior, ConditionalPolicy, Matrix, Mdp, StateDist, Values, ViMode,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::manifest::{ExperimentManifest, Outputs};
use crate::{Cli, Command};

pub fn dispatch(cli: &Cli, cfg: &ExperimentConfig) -> Result<ExperimentManifest> {
    let mut out = Outputs::new(&cli.out_dir)?;
    let (seeds, outcome) = match cli.command {
        Command::GridworldSweep => (vec![], gridworld_sweep(cfg, &mut out)),
        Command::Vi => (vec![], vi(cli, cfg, &mut out)),
        Command::BaSolve => (vec![], ba_solve(cfg, &mut out)),
        Command::RateDistortion => (vec![], rate_distortion(cfg, &mut out)),
        Command::Audit => {
            let seed = cli.seed_list().map(|s| s[0]).unwrap_or(cfg.audit.seed);
            (vec![seed], audit(cfg, seed, &mut out))
        }
        Command::Train => {
            let seeds = cli.seed_list().unwrap_or_else(|| vec![cfg.train.seed]);
            let r = train_seeds(cli, cfg, &seeds, &mut out);
            (seeds, r)
        }
    };
    let metadata = Metadata {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        mode: cli.mode.clone(),
        seeds: seeds.clone(),
        config: cfg.to_toml_string(),
    };
    out.write("metadata.json", &json_bytes(&metadata))?;
    let manifest = out.finish(cli.command.name(), cli.config.as_deref(), seeds)?;
    outcome.map(|()| manifest)
}

#[derive(Serialize)]
struct Metadata {
    command: &'static str,
    version: &'static str,
    mode: Option<String>,
    seeds: Vec<u64>,
    config: String,
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}

/// CSV with a header and rows of already formatted cells.
fn table_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
}

fn load_mdp(cfg: &ExperimentConfig) -> Result<(Mdp, StateDist)> {
    let mdp: Mdp = match &cfg.mdp.path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read MDP file {path}: {e}")))?;
            read_mdp(&text)?
        }
        None => build_grid_world(&cfg.grid)?,
    };
    let p = StateDist::uniform_over_unmasked(mdp.terminal_mask())?;
    Ok((mdp, p))
}

fn values_table(v: &Values) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = v
        .values()
        .iter()
        .enumerate()
        .map(|(s, x)| vec![s.to_string(), x.to_string()])
        .collect();
    table_bytes(&["state".into(), "value".into()], &rows)
}

fn policy_table(pi: &ConditionalPolicy<f64>) -> Result<Vec<u8>> {
    let mut header = vec!["state".to_string()];
    header.extend((0..pi.n_actions()).map(|a| format!("a{a}")));
    let rows: Vec<Vec<String>> = (0..pi.n_states())
        .map(|s| {
            let mut r = vec![s.to_string()];
            r.extend(pi.row(s).iter().map(f64::to_string));
            r
        })
        .collect();
    table_bytes(&header, &rows)
}

fn prior_table(prior: &ActionPrior<f64>) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = prior
        .probs()
        .iter()
        .enumerate()
        .map(|(a, x)| vec![a.to_string(), x.to_string()])
        .collect();
    table_bytes(&["action".into(), "probability".into()], &rows)
}

fn gridworld_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let mdp: Mdp = build_grid_world(&cfg.grid)?;
    let p = StateDist::uniform_over_unmasked(mdp.terminal_mask())?;
    let bellman = cfg.solver.bellman(1.0);
    let rows = beta_sweep(&mdp, &p, &cfg.sweep.betas, &bellman)?;
    out.write("sweep.csv", &csv_bytes(&rows)?)?;
    for r in rows.iter().filter(|r| !r.converged) {
        log::warn!("beta {} ({}) did not converge", r.beta, r.mode.as_str());
    }
    match rows.iter().find_map(|r| r.error.as_ref()) {
        Some(e) => Err(CliError::Numerical(e.clone())),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct ResidualRow {
    sweep: usize,
    residual: f64,
}

fn vi(cli: &Cli, cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (mdp, p) = load_mdp(cfg)?;
    let mode_name = cli.mode.as_deref().unwrap_or(&cfg.solver.mode);
    let mode = match mode_name {
        "standard" => ViMode::Standard,
        "soft" => ViMode::SoftFixedPrior(ActionPrior::uniform(mdp.n_actions())),
        "mutual_information" => ViMode::MutualInformation,
        other => return Err(CliError::Config(format!("unknown vi mode {other:?}"))),
    };
    let r = value_iteration(&mdp, &p, &cfg.solver.bellman(cfg.solver.beta), &mode)?;
    if !r.converged {
        log::warn!("value iteration stopped after {} sweeps without converging", r.sweeps);
    }
    out.write("values.csv", &values_table(&r.values)?)?;
    out.write("policy.csv", &policy_table(&r.final_policy)?)?;
    out.write("prior.csv", &prior_table(&r.final_prior)?)?;
    let residuals: Vec<ResidualRow> = r
        .residual_trace
        .iter()
        .enumerate()
        .map(|(k, x)| ResidualRow { sweep: k + 1, residual: *x })
        .collect();
    out.write("residuals.csv", &csv_bytes(&residuals)?)?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    objective: f64,
    gap_bound: f64,
}

fn ba_solve(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (mdp, p) = load_mdp(cfg)?;
    let beta = cfg.solver.beta;
    let zeros = Values::zeros(mdp.n_states());
    let (values, ba) = apply_b_star(&mdp, &zeros, &p, &cfg.solver.bellman(beta), None)?;
    let uniform = ConditionalPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let trace = ba
        .objective_trace
        .iter()
        .enumerate()
        .map(|(m, x)| {
            Ok(TraceRow {
                iteration: m + 1,
                objective: *x,
                gap_bound: gap_bound(&uniform, &p, beta, m + 1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.write("ba_values.csv", &values_table(&values)?)?;
    out.write("ba_trace.csv", &csv_bytes(&trace)?)?;
    out.write("policy.csv", &policy_table(&ba.policy)?)?;
    out.write("prior.csv", &prior_table(&ba.prior)?)?;
    Ok(())
}

#[derive(Serialize)]
struct RdRow {
    beta: f64,
    expected_reward: f64,
    mutual_information: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
}

fn rate_distortion(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let rd = &cfg.rate_distortion;
    let reward = Matrix::from_rows(&rd.reward)?;
    let p = if rd.state_weights.is_empty() {
        StateDist::uniform(reward.rows())
    } else {
        StateDist::new(rd.state_weights.clone())?
    };
    if rd.betas.is_empty() {
        return Err(CliError::Config("rate_distortion.betas is empty".into()));
    }
    let mut rows = Vec::new();
    for &beta in &rd.betas {
        let ba = rate_distortion_solve(&reward, &p, beta, &cfg.solver.bellman(beta))?;
        let expected: f64 = (0..reward.rows())
            .map(|s| {
                p.get(s) * (0..reward.cols()).map(|a| ba.policy.get(s, a) * reward.get(s, a)).sum::<f64>()
            })
            .sum();
        let mi = mutual_information(&ba.policy, &p)?;
        rows.push(RdRow {
            beta,
            expected_reward: expected,
            mutual_information: mi,
            objective: expected - mi / beta,
            iterations: ba.iterations,
            converged: ba.converged,
        });
    }
    out.write("rate_distortion.csv", &csv_bytes(&rows)?)?;
    Ok(())
}

fn audit(cfg: &ExperimentConfig, seed: u64, out: &mut Outputs) -> Result<()> {
    let audit_cfg = mireg_core::audit::AuditConfig { seed, ..cfg.audit.clone() };
    let report = run_audit(&audit_cfg)?;
    out.write("audit.json", &json_bytes(&report))?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Numerical(format!("audit checks failed: {}", failed.join(", "))))
    }
}

fn train_modes(cli: &Cli, cfg: &MiracleConfig) -> Result<Vec<PriorMode>> {
    match cli.mode.as_deref() {
        None => Ok(vec![cfg.prior_mode]),
        Some("learned_marginal") => Ok(vec![PriorMode::LearnedMarginal]),
        Some("fixed_uniform") => Ok(vec![PriorMode::FixedUniform]),
        Some("both") => Ok(vec![PriorMode::LearnedMarginal, PriorMode::FixedUniform]),
        Some(other) => Err(CliError::Config(format!("unknown train mode {other:?}"))),
    }
}

/// Runs every seed on its own worker; results come back in seed order.
fn run_seeds(base: &MiracleConfig, seeds: &[u64], ckpt: &Path) -> Vec<mireg_agent::Result<TrainOutcome>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    let mut results: Vec<Option<mireg_agent::Result<TrainOutcome>>> = (0..seeds.len()).map(|_| None).collect();
    for chunk_start in (0..seeds.len()).step_by(workers) {
        let chunk = &seeds[chunk_start..(chunk_start + workers).min(seeds.len())];
        let done: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let cfg = MiracleConfig { seed, ..base.clone() };
                    scope.spawn(move || train(&cfg, Some(ckpt)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
        });
        for (k, r) in done.into_iter().enumerate() {
            results[chunk_start + k] = Some(r);
        }
    }
    results.into_iter().map(|r| r.expect("every seed ran")).collect()
}

#[derive(Serialize)]
struct AggregateRow {
    step: usize,
    episode: usize,
    seeds: usize,
    trailing_mean: f64,
    trailing_se: f64,
    best_mean: f64,
    best_se: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(curves: &[&[CurveRow]]) -> Vec<AggregateRow> {
    let episodes = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..episodes)
        .map(|e| {
            let trailing: Vec<f64> = curves.iter().map(|c| c[e].trailing_mean_reward).collect();
            let best: Vec<f64> = curves.iter().map(|c| c[e].best_so_far).collect();
            let (tm, tse) = mean_se(&trailing);
            let (bm, bse) = mean_se(&best);
            AggregateRow {
                step: curves[0][e].step,
                episode: e + 1,
                seeds: curves.len(),
                trailing_mean: tm,
                trailing_se: tse,
                best_mean: bm,
                best_se: bse,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct FailureRow {
    seed: u64,
    error: String,
}

fn train_seeds(cli: &Cli, cfg: &ExperimentConfig, seeds: &[u64], out: &mut Outputs) -> Result<()> {
    if seeds.is_empty() {
        return Err(CliError::Config("no seeds given".into()));
    }
    let modes = train_modes(cli, &cfg.train)?;
    let mut failures = 0;
    for mode in modes {
        let base = MiracleConfig { prior_mode: mode, ..cfg.train.clone() };
        base.validate()?;
        let dir = mode.as_str();
        let ckpt_rel = format!("{dir}/checkpoints");
        let ckpt_abs = out.root().join(&ckpt_rel);
        std::fs::create_dir_all(&ckpt_abs)?;
        let results = run_seeds(&base, seeds, &ckpt_abs);

        let mut summary = Vec::new();
        let mut curves = Vec::new();
        let mut failed = Vec::new();
        for (seed, r) in seeds.iter().zip(&results) {
            match r {
                Ok(o) => {
                    let mut buf = Vec::new();
                    write_curve_csv(&mut buf, &o.curve)?;
                    out.write(&format!("{dir}/curve_seed{seed}.csv"), &buf)?;
                    summary.extend(o.curve.iter().cloned());
                    curves.push(o.curve.as_slice());
                }
                Err(e) => {
                    log::error!("seed {seed} failed: {e}");
                    failed.push(FailureRow { seed: *seed, error: e.to_string() });
                }
            }
        }
        summary.sort_by_key(|r| (r.step, r.seed));
        out.write(&format!("{dir}/summary.csv"), &csv_bytes(&summary)?)?;
        if !curves.is_empty() {
            out.write(&format!("{dir}/aggregate.csv"), &csv_bytes(&aggregate(&curves))?)?;
        }
        if !failed.is_empty() {
            out.write(&format!("{dir}/failures.csv"), &csv_bytes(&failed)?)?;
            failures += failed.len();
        }
        let mut names: Vec<String> = std::fs::read_dir(&ckpt_abs)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in names {
            out.register_existing(&format!("{ckpt_rel}/{name}"))?;
        }
    }
    if failures > 0 {
        Err(CliError::Numerical(format!("{failures} seed run(s) aborted")))
    } else {
        Ok(())
    }
}
