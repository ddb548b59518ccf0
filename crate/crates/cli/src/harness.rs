//! Command implementations: training, global-vs-local error sweeps,
//! concentration-bound verification, and the decentralized execution demo.
//!
//! Every output row carries the config hash, the seeds involved, the
//! observation mode metadata, and the crate version, so any row can be
//! replayed from the row plus the config file. All floating-point output
//! uses Rust's shortest round-trip formatting; sweep and bound reports are
//! byte-identical across runs with the same config and seed (training
//! curves also record wall-clock timings, which vary).

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mfc_core::bounds::{
    optimality_gap_bound, optimality_gap_bound_action_free, BoundConstants, BoundValue,
};
use mfc_core::dist::{empirical_distribution, Distribution};
use mfc_core::dynamics::{compute_flow, truncation_horizon};
use mfc_core::localize::localize;
use mfc_core::model::MeanFieldModel;
use mfc_core::npg::{train, Checkpoint, ParametricPolicy};
use mfc_core::policy::{Policy, PolicySequence};
use mfc_core::seed::derive_seed;
use mfc_core::simulator::{
    estimate_value, initial_joint_state, ExecutionMode, ValueStart,
};
use mfc_core::synthetic::LinearMixPolicy;
use mfc_core::verify::verify_concentration;

use crate::config::ExperimentConfig;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Which variable an error sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Population,
    StateSpace,
}

impl SweepKind {
    fn label(self) -> &'static str {
        match self {
            SweepKind::Population => "population",
            SweepKind::StateSpace => "state_space",
        }
    }

    fn tag(self) -> u64 {
        match self {
            SweepKind::Population => 1,
            SweepKind::StateSpace => 2,
        }
    }
}

/// One CSV row of an error sweep. Cell rows hold one (sweep value, seed)
/// measurement; summary rows aggregate the error across seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub row_kind: String,
    pub sweep: String,
    pub sweep_value: usize,
    pub n_agents: usize,
    pub quality_levels: usize,
    pub seed: String,
    pub base_seed: u64,
    pub episodes: usize,
    pub eval_gamma: f64,
    pub horizon: usize,
    pub init_strategy: String,
    pub v_global_mean: f64,
    pub v_global_stderr: f64,
    pub v_local_mean: f64,
    pub v_local_stderr: f64,
    pub abs_error: f64,
    pub gap_bound_general: String,
    pub gap_bound_action_free: String,
    pub policy_lipschitz: f64,
    pub config_hash: String,
    pub version: String,
}

fn bound_to_string(b: &BoundValue) -> String {
    match b {
        BoundValue::Finite(v) => format!("{v}"),
        BoundValue::Infeasible => "infeasible".into(),
    }
}

/// Derivation chain for per-cell randomness: everything hangs off the base
/// seed, the sweep kind, the sweep value, the seed index, and a stream id.
fn cell_seed(base: u64, tag: u64, sweep_value: u64, seed_idx: u64, stream: u64) -> u64 {
    derive_seed(
        derive_seed(derive_seed(derive_seed(base, tag), sweep_value), seed_idx),
        stream,
    )
}

fn load_checkpoint_policy(config: &ExperimentConfig) -> Result<Option<ParametricPolicy>> {
    match &config.trainer.checkpoint {
        None => Ok(None),
        Some(path) => {
            let ckpt = Checkpoint::load(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            Ok(Some(ckpt.to_policy()?))
        }
    }
}

/// Measures one sweep cell: obtain a policy (checkpoint or fresh
/// training), localize it, and estimate the global-vs-local value gap.
#[allow(clippy::too_many_arguments)]
fn measure_cell(
    config: &ExperimentConfig,
    kind: SweepKind,
    sweep_value: usize,
    n_agents: usize,
    quality_levels: usize,
    seed_idx: u64,
    base_seed: u64,
    episodes: usize,
    checkpoint: Option<&ParametricPolicy>,
) -> Result<SweepRow> {
    let model = config.env.build(Some(quality_levels))?;
    let spaces = model.spaces();
    let mu0 = Distribution::uniform(spaces.num_states)?;
    let sv = sweep_value as u64;
    let tag = kind.tag();

    let policy: ParametricPolicy = match checkpoint {
        Some(p) => {
            if p.spaces() != spaces {
                bail!(
                    "checkpoint spaces {:?} do not match environment {:?}",
                    p.spaces(),
                    spaces
                );
            }
            p.clone()
        }
        None => {
            if !config.trainer.enabled {
                bail!("no checkpoint configured and training is disabled");
            }
            let trainer = config
                .trainer
                .build(spaces.num_states, cell_seed(base_seed, tag, sv, seed_idx, 0))?;
            let policy0 = ParametricPolicy::new(
                spaces,
                config.trainer.hidden_width,
                cell_seed(base_seed, tag, sv, seed_idx, 1),
            )?;
            let result = train(&policy0, &model, &trainer)?;
            result.best_policy(&policy0)?
        }
    };

    let gamma = config.evaluation.gamma;
    let horizon = truncation_horizon(model.reward_bound(), gamma, config.evaluation.trunc_tol)?
        .max(1);
    let seq = PolicySequence::stationary(Arc::new(policy.clone()) as Arc<dyn Policy>);
    let local = localize(&seq, &mu0, &model, horizon)?;
    let flow = compute_flow(&mu0, &seq, &model, horizon)?;

    let start = ValueStart::FromDistribution {
        mu0: &mu0,
        n_agents,
        strategy: config.evaluation.init_strategy,
    };
    let v_global = estimate_value(
        &start,
        &seq,
        &ExecutionMode::Global,
        &model,
        gamma,
        horizon,
        episodes,
        cell_seed(base_seed, tag, sv, seed_idx, 2),
    )?;
    let v_local = estimate_value(
        &start,
        &local,
        &ExecutionMode::Local(flow),
        &model,
        gamma,
        horizon,
        episodes,
        cell_seed(base_seed, tag, sv, seed_idx, 3),
    )?;

    let constants = BoundConstants::from_model(&model, policy.lipschitz_bound())?;
    let general = optimality_gap_bound(
        &constants,
        n_agents,
        spaces.num_states,
        spaces.num_actions,
        gamma,
    )?;
    let action_free =
        optimality_gap_bound_action_free(&constants, n_agents, spaces.num_states, gamma)?;

    Ok(SweepRow {
        row_kind: "cell".into(),
        sweep: kind.label().into(),
        sweep_value,
        n_agents,
        quality_levels,
        seed: seed_idx.to_string(),
        base_seed,
        episodes,
        eval_gamma: gamma,
        horizon,
        init_strategy: config.evaluation.init_strategy.to_string(),
        v_global_mean: v_global.mean,
        v_global_stderr: v_global.std_err,
        v_local_mean: v_local.mean,
        v_local_stderr: v_local.std_err,
        abs_error: (v_global.mean - v_local.mean).abs(),
        gap_bound_general: bound_to_string(&general),
        gap_bound_action_free: bound_to_string(&action_free),
        policy_lipschitz: policy.lipschitz_bound(),
        config_hash: config.stable_hash(),
        version: VERSION.into(),
    })
}

/// Mean and sample standard deviation of the cell errors for one sweep
/// value, emitted as two summary rows. Exposed so tests can recompute the
/// aggregation from raw rows and demand exact agreement.
pub fn summarize_cells(cells: &[SweepRow]) -> (f64, f64) {
    let n = cells.len() as f64;
    let mean = cells.iter().map(|c| c.abs_error).sum::<f64>() / n;
    let std = if cells.len() < 2 {
        0.0
    } else {
        (cells
            .iter()
            .map(|c| (c.abs_error - mean) * (c.abs_error - mean))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    };
    (mean, std)
}

/// Runs a full error sweep and returns all rows (cells first, in sweep
/// order, then the per-value summary rows).
pub fn run_error_sweep(
    config: &ExperimentConfig,
    kind: SweepKind,
    base_seed: u64,
    episodes_override: Option<usize>,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let episodes = episodes_override.unwrap_or(config.evaluation.episodes);
    let checkpoint = load_checkpoint_policy(config)?;

    let values: &[usize] = match kind {
        SweepKind::Population => &config.sweep.n_values,
        SweepKind::StateSpace => &config.sweep.q_values,
    };
    let mut jobs = Vec::new();
    for &value in values {
        let (n_agents, quality) = match kind {
            SweepKind::Population => (value, config.env.quality_levels),
            SweepKind::StateSpace => (config.sweep.q_sweep_population, value),
        };
        for seed_idx in 0..config.sweep.seeds {
            jobs.push((value, n_agents, quality, seed_idx));
        }
    }

    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(value, n_agents, quality, seed_idx)| {
            measure_cell(
                config,
                kind,
                value,
                n_agents,
                quality,
                seed_idx,
                base_seed,
                episodes,
                checkpoint.as_ref(),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summaries = Vec::new();
    for &value in values {
        let cells: Vec<SweepRow> = rows
            .iter()
            .filter(|r| r.sweep_value == value)
            .cloned()
            .collect();
        let (mean, std) = summarize_cells(&cells);
        for (kind_label, stat) in [("summary_mean", mean), ("summary_std", std)] {
            let mut row = cells[0].clone();
            row.row_kind = kind_label.into();
            row.seed = String::new();
            row.v_global_mean = cells.iter().map(|c| c.v_global_mean).sum::<f64>()
                / cells.len() as f64;
            row.v_global_stderr = 0.0;
            row.v_local_mean =
                cells.iter().map(|c| c.v_local_mean).sum::<f64>() / cells.len() as f64;
            row.v_local_stderr = 0.0;
            row.abs_error = stat;
            summaries.push(row);
        }
    }
    rows.extend(summaries);
    Ok(rows)
}

pub fn write_rows<T: Serialize>(rows: &[T], csv_path: &Path, json_mirror: bool) -> Result<()> {
    if let Some(parent) = csv_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    if json_mirror {
        let json_path = csv_path.with_extension("json");
        std::fs::write(&json_path, serde_json::to_string_pretty(rows)?)?;
    }
    Ok(())
}

/// Result of the `train` command.
pub struct TrainOutcome {
    pub best_value: f64,
    pub average_value: f64,
    pub initial_value: f64,
    pub checkpoint_path: std::path::PathBuf,
}

/// Trains on the configured environment and writes a checkpoint plus a
/// training-curve CSV (iteration, value, seconds).
pub fn run_train(config: &ExperimentConfig, base_seed: u64, out_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let model = config.env.build(None)?;
    let spaces = model.spaces();
    let trainer = config
        .trainer
        .build(spaces.num_states, derive_seed(base_seed, 1))?;
    let policy0 = ParametricPolicy::new(
        spaces,
        config.trainer.hidden_width,
        derive_seed(base_seed, 2),
    )?;
    let result = train(&policy0, &model, &trainer)?;
    let best = result.best_policy(&policy0)?;

    std::fs::create_dir_all(out_dir)?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    Checkpoint::from_policy(&best, trainer).save(&checkpoint_path)?;

    #[derive(Serialize)]
    struct CurveRow {
        iteration: usize,
        value: f64,
        seconds: f64,
    }
    let curve: Vec<CurveRow> = result
        .values
        .iter()
        .zip(&result.iteration_seconds)
        .enumerate()
        .map(|(i, (&value, &seconds))| CurveRow {
            iteration: i + 1,
            value,
            seconds,
        })
        .collect();
    write_rows(&curve, &out_dir.join("training_curve.csv"), config.output.json_mirror)?;

    Ok(TrainOutcome {
        best_value: result.best_value,
        average_value: result.average_value,
        initial_value: result.initial_value,
        checkpoint_path,
    })
}

/// One row of the bound-verification report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundRow {
    pub row_kind: String,
    pub check: String,
    pub n_agents: usize,
    pub t: String,
    pub empirical_mean: String,
    pub std_err: String,
    pub bound: String,
    pub pass: String,
    pub trials: usize,
    pub policy_source: String,
    pub policy_lipschitz: f64,
    pub config_hash: String,
    pub base_seed: u64,
    pub version: String,
}

/// Runs the four concentration checks at every configured population size
/// and evaluates both gap bounds per size. Lemma-style rows carry
/// per-step empirical means, Monte-Carlo errors, and the envelope; theorem
/// rows carry the bound value or "infeasible".
pub fn run_bound_verification(
    config: &ExperimentConfig,
    base_seed: u64,
    episodes_override: Option<usize>,
) -> Result<Vec<BoundRow>> {
    config.validate()?;
    let episodes = episodes_override.unwrap_or(config.evaluation.episodes).max(2);
    let model = config.env.build(None)?;
    let spaces = model.spaces();
    let mu0 = Distribution::uniform(spaces.num_states)?;

    let checkpoint = load_checkpoint_policy(config)?;
    let (policy, policy_source): (Arc<dyn Policy>, &str) = match checkpoint {
        Some(p) => {
            if p.spaces() != spaces {
                bail!("checkpoint spaces do not match environment");
            }
            (Arc::new(p), "checkpoint")
        }
        None => (
            Arc::new(LinearMixPolicy::random(
                spaces,
                0.5,
                derive_seed(base_seed, 7),
            )?),
            "synthetic",
        ),
    };
    let policy_lipschitz = policy.lipschitz_bound();
    let seq = PolicySequence::stationary(policy);
    let hash = config.stable_hash();
    let t_max = 10usize;

    let mut rows = Vec::new();
    for &n in &config.sweep.n_values {
        let report = verify_concentration(
            &model,
            &seq,
            &mu0,
            n,
            t_max,
            episodes,
            derive_seed(base_seed, n as u64),
        )?;
        for check in report.checks() {
            for point in &check.points {
                rows.push(BoundRow {
                    row_kind: "concentration".into(),
                    check: check.name.clone(),
                    n_agents: n,
                    t: point.t.to_string(),
                    empirical_mean: point.empirical_mean.to_string(),
                    std_err: point.std_err.to_string(),
                    bound: point.bound.to_string(),
                    pass: point.passes(3.0).to_string(),
                    trials: episodes,
                    policy_source: policy_source.into(),
                    policy_lipschitz,
                    config_hash: hash.clone(),
                    base_seed,
                    version: VERSION.into(),
                });
            }
        }
        let constants = BoundConstants::from_model(&model, policy_lipschitz)?;
        let gamma = config.evaluation.gamma;
        for (name, bound) in [
            (
                "gap_bound_general",
                optimality_gap_bound(&constants, n, spaces.num_states, spaces.num_actions, gamma)?,
            ),
            (
                "gap_bound_action_free",
                optimality_gap_bound_action_free(&constants, n, spaces.num_states, gamma)?,
            ),
        ] {
            rows.push(BoundRow {
                row_kind: "gap_bound".into(),
                check: name.into(),
                n_agents: n,
                t: String::new(),
                empirical_mean: String::new(),
                std_err: String::new(),
                bound: bound_to_string(&bound),
                pass: bound.is_feasible().to_string(),
                trials: 0,
                policy_source: policy_source.into(),
                policy_lipschitz,
                config_hash: hash.clone(),
                base_seed,
                version: VERSION.into(),
            });
        }
    }
    Ok(rows)
}

/// Summary of a decentralized-execution demo, including the cross-check
/// against the simulator's local observation mode.
#[derive(Clone, Debug, Serialize)]
pub struct DemoOutcome {
    pub n_agents: usize,
    pub horizon: usize,
    pub demo_mean: f64,
    pub demo_std_err: f64,
    pub local_mode_mean: f64,
    pub local_mode_std_err: f64,
    pub agreement_sigma: f64,
    pub trace_path: std::path::PathBuf,
}

/// Runs fully decentralized execution (each agent carrying its own flow
/// recursion), writes the first episode's trace, and cross-checks the
/// average return against the simulator's local mode.
pub fn run_decentralized_demo(
    config: &ExperimentConfig,
    base_seed: u64,
    episodes_override: Option<usize>,
    out_dir: &Path,
) -> Result<DemoOutcome> {
    config.validate()?;
    let model = config.env.build(None)?;
    let spaces = model.spaces();
    let policy = load_checkpoint_policy(config)?
        .ok_or_else(|| anyhow::anyhow!("demo-decentralized requires trainer.checkpoint"))?;
    if policy.spaces() != spaces {
        bail!("checkpoint spaces do not match environment");
    }
    let episodes = episodes_override.unwrap_or(config.evaluation.episodes).max(2);
    let n_agents = config.sweep.n_values[0];
    let gamma = config.evaluation.gamma;
    let horizon = truncation_horizon(model.reward_bound(), gamma, config.evaluation.trunc_tol)?
        .max(1);

    let mu0 = Distribution::uniform(spaces.num_states)?;
    let joint0 = initial_joint_state(
        &mu0,
        n_agents,
        config.evaluation.init_strategy,
        derive_seed(base_seed, 1),
    )?;
    let mu0_eff = empirical_distribution(&joint0.states, spaces.num_states)?;

    let returns: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|e| -> Result<f64> {
            let trace = mfc_core::decentralized::decentralized_rollout(
                &policy,
                &model,
                &mu0_eff,
                &joint0.states,
                gamma,
                horizon,
                derive_seed(derive_seed(base_seed, 2), e as u64),
            )?;
            Ok(trace.discounted_return)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = returns.len() as f64;
    let demo_mean = returns.iter().sum::<f64>() / n;
    let var = returns
        .iter()
        .map(|r| (r - demo_mean) * (r - demo_mean))
        .sum::<f64>()
        / (n - 1.0);
    let demo_std_err = (var / n).sqrt();

    // Archive one full trace for inspection.
    std::fs::create_dir_all(out_dir)?;
    let trace = mfc_core::decentralized::decentralized_rollout(
        &policy,
        &model,
        &mu0_eff,
        &joint0.states,
        gamma,
        horizon,
        derive_seed(derive_seed(base_seed, 2), 0),
    )?;
    let trace_path = out_dir.join("decentralized_trace.json");
    std::fs::write(&trace_path, trace.to_json()?)?;

    // Cross-check: the simulator's local mode with the same flow.
    let seq = PolicySequence::stationary(Arc::new(policy) as Arc<dyn Policy>);
    let flow = compute_flow(&mu0_eff, &seq, &model, horizon)?;
    let local = estimate_value(
        &ValueStart::Joint(&joint0),
        &seq,
        &ExecutionMode::Local(flow),
        &model,
        gamma,
        horizon,
        episodes,
        derive_seed(base_seed, 3),
    )?;
    let sigma = (demo_std_err * demo_std_err + local.std_err * local.std_err)
        .sqrt()
        .max(1e-12);
    Ok(DemoOutcome {
        n_agents,
        horizon,
        demo_mean,
        demo_std_err,
        local_mode_mean: local.mean,
        local_mode_std_err: local.std_err,
        agreement_sigma: (demo_mean - local.mean).abs() / sigma,
        trace_path,
    })
}
