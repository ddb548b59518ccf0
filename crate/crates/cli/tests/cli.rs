//! End-to-end checks of the experiment driver on desk-size configs.

use std::path::PathBuf;

use mfc_cli::config::ExperimentConfig;
use mfc_cli::harness::{
    run_bound_verification, run_decentralized_demo, run_error_sweep, run_train, summarize_cells,
    write_rows, SweepKind, SweepRow,
};

fn tiny_config() -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.env.quality_levels = 3;
    config.trainer.outer_iters = 3;
    config.trainer.inner_iters = 4;
    config.trainer.hidden_width = 8;
    config.trainer.gamma = 0.6;
    config.sweep.n_values = vec![4, 8];
    config.sweep.q_values = vec![3, 4];
    config.sweep.q_sweep_population = 6;
    config.sweep.seeds = 2;
    config.evaluation.gamma = 0.6;
    config.evaluation.episodes = 8;
    config.evaluation.trunc_tol = 1e-2;
    config
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mfc-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn sweep_output_is_byte_identical_across_runs() {
    let config = tiny_config();
    let dir = scratch_dir("determinism");
    for run in 0..2 {
        let rows = run_error_sweep(&config, SweepKind::Population, 42, None).unwrap();
        write_rows(&rows, &dir.join(format!("run{run}.csv")), true).unwrap();
    }
    let a = std::fs::read(dir.join("run0.csv")).unwrap();
    let b = std::fs::read(dir.join("run1.csv")).unwrap();
    assert_eq!(a, b, "identical config and seed must give identical bytes");
    let a = std::fs::read(dir.join("run0.json")).unwrap();
    let b = std::fs::read(dir.join("run1.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn summary_rows_match_recomputation_from_cells() {
    let config = tiny_config();
    let dir = scratch_dir("summaries");
    let rows = run_error_sweep(&config, SweepKind::StateSpace, 7, None).unwrap();
    let csv_path = dir.join("sweep.csv");
    write_rows(&rows, &csv_path, false).unwrap();

    // Reload from disk and recompute the aggregation from the cell rows.
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let reloaded: Vec<SweepRow> = reader.deserialize().map(|r| r.unwrap()).collect();
    for &value in &config.sweep.q_values {
        let cells: Vec<SweepRow> = reloaded
            .iter()
            .filter(|r| r.row_kind == "cell" && r.sweep_value == value)
            .cloned()
            .collect();
        assert_eq!(cells.len(), config.sweep.seeds as usize);
        let (mean, std) = summarize_cells(&cells);
        let summary_mean = reloaded
            .iter()
            .find(|r| r.row_kind == "summary_mean" && r.sweep_value == value)
            .unwrap();
        let summary_std = reloaded
            .iter()
            .find(|r| r.row_kind == "summary_std" && r.sweep_value == value)
            .unwrap();
        assert_eq!(summary_mean.abs_error, mean);
        assert_eq!(summary_std.abs_error, std);
    }
}

#[test]
fn sweep_rows_carry_replay_metadata() {
    let config = tiny_config();
    let rows = run_error_sweep(&config, SweepKind::Population, 3, Some(4)).unwrap();
    let hash = config.stable_hash();
    for row in &rows {
        assert_eq!(row.config_hash, hash);
        assert_eq!(row.base_seed, 3);
        assert_eq!(row.version, env!("CARGO_PKG_VERSION"));
        assert_eq!(row.init_strategy, "exact_rounding");
    }
    // Cells come first in sweep order, then summaries.
    let cells: Vec<&SweepRow> = rows.iter().filter(|r| r.row_kind == "cell").collect();
    assert_eq!(cells.len(), 4);
    assert!(cells.windows(2).all(|w| w[0].sweep_value <= w[1].sweep_value));
}

#[test]
fn missing_checkpoint_with_training_disabled_is_an_error() {
    let mut config = tiny_config();
    config.trainer.enabled = false;
    let err = run_error_sweep(&config, SweepKind::Population, 0, None).unwrap_err();
    assert!(err.to_string().contains("training is disabled"), "{err}");
}

#[test]
fn bound_verification_reports_infeasible_gap_bounds_but_runs_checks() {
    // γ = 0.9 with the firm constants puts γ·S_P well above 1, so the gap
    // bounds must report infeasible while the concentration rows still run
    // and pass.
    let mut config = tiny_config();
    config.sweep.n_values = vec![20];
    config.evaluation.episodes = 100;
    config.evaluation.gamma = 0.9;
    let rows = run_bound_verification(&config, 11, None).unwrap();

    let concentration: Vec<_> = rows
        .iter()
        .filter(|r| r.row_kind == "concentration")
        .collect();
    // Four checks, eleven time points each.
    assert_eq!(concentration.len(), 4 * 11);
    assert!(concentration.iter().all(|r| r.pass == "true"));

    let gaps: Vec<_> = rows.iter().filter(|r| r.row_kind == "gap_bound").collect();
    assert_eq!(gaps.len(), 2);
    assert!(gaps.iter().all(|r| r.bound == "infeasible"));
}

#[test]
fn train_then_demo_decentralized_cross_checks() {
    let config = tiny_config();
    let dir = scratch_dir("demo");
    let outcome = run_train(&config, 5, &dir).unwrap();
    assert!(outcome.checkpoint_path.exists());
    assert!(dir.join("training_curve.csv").exists());

    let mut demo_config = config.clone();
    demo_config.trainer.checkpoint = Some(outcome.checkpoint_path.clone());
    demo_config.sweep.n_values = vec![3];
    demo_config.evaluation.episodes = 400;
    let demo = run_decentralized_demo(&demo_config, 9, None, &dir).unwrap();
    assert!(demo.trace_path.exists());
    assert!(
        demo.agreement_sigma <= 3.0,
        "decentralized vs local-mode disagree by {} sigma",
        demo.agreement_sigma
    );

    // The archived trace holds one state path per agent and one shared flow.
    let text = std::fs::read_to_string(&demo.trace_path).unwrap();
    let trace: mfc_core::decentralized::DecentralizedTrace =
        serde_json::from_str(&text).unwrap();
    assert_eq!(trace.agent_states.len(), 3);
    assert_eq!(trace.shared_flow.len(), trace.horizon + 1);
}

#[test]
fn demo_requires_a_checkpoint() {
    let config = tiny_config();
    let dir = scratch_dir("demo-missing");
    let err = run_decentralized_demo(&config, 0, None, &dir).unwrap_err();
    assert!(err.to_string().contains("checkpoint"), "{err}");
}

#[test]
fn sweeps_can_share_one_checkpoint() {
    let mut config = tiny_config();
    let dir = scratch_dir("shared-ckpt");
    let outcome = run_train(&config, 21, &dir).unwrap();
    config.trainer.checkpoint = Some(outcome.checkpoint_path);
    config.trainer.enabled = false;
    // Population sweep keeps Q fixed, so the checkpoint fits every cell.
    let rows = run_error_sweep(&config, SweepKind::Population, 22, None).unwrap();
    assert!(rows.iter().any(|r| r.row_kind == "cell"));
    // A state-space sweep changes Q, which the fixed checkpoint cannot fit.
    let err = run_error_sweep(&config, SweepKind::StateSpace, 22, None).unwrap_err();
    assert!(err.to_string().contains("do not match"), "{err}");
}
