use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use mfc_cli::config::ExperimentConfig;
use mfc_cli::harness::{
    run_bound_verification, run_decentralized_demo, run_error_sweep, run_train, write_rows,
    SweepKind,
};

/// Experiment driver for the mean-field control toolkit.
#[derive(Parser)]
#[command(name = "mfc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy on the configured environment and save a checkpoint.
    Train(CommonArgs),
    /// Sweep the population size and measure the global-vs-local value gap.
    SweepN(CommonArgs),
    /// Sweep the number of quality levels at fixed population size.
    SweepQ(CommonArgs),
    /// Verify the concentration envelopes and report the gap bounds.
    VerifyBounds(CommonArgs),
    /// Execute a checkpoint policy fully decentralized and cross-check it.
    DemoDecentralized(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured episode count.
    #[arg(long)]
    episodes: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn load_config(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::default()),
        }
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(threads) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()?;
        }
        Ok(())
    }
}

fn run_sweep(args: &CommonArgs, kind: SweepKind, file_stem: &str) -> Result<()> {
    args.init_threads()?;
    let config = args.load_config()?;
    let rows = run_error_sweep(&config, kind, args.seed, args.episodes)?;
    let csv_path = args.out.join(format!("{file_stem}.csv"));
    write_rows(&rows, &csv_path, config.output.json_mirror)?;
    for row in rows.iter().filter(|r| r.row_kind == "summary_mean") {
        println!(
            "sweep_value={} mean_error={} (bounds: general={}, action_free={})",
            row.sweep_value, row.abs_error, row.gap_bound_general, row.gap_bound_action_free
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(args) => {
            args.init_threads()?;
            let config = args.load_config()?;
            let outcome = run_train(&config, args.seed, &args.out)?;
            println!(
                "trained: initial={} best={} average={}",
                outcome.initial_value, outcome.best_value, outcome.average_value
            );
            println!("checkpoint: {}", outcome.checkpoint_path.display());
        }
        Command::SweepN(args) => run_sweep(args, SweepKind::Population, "sweep_population")?,
        Command::SweepQ(args) => run_sweep(args, SweepKind::StateSpace, "sweep_state_space")?,
        Command::VerifyBounds(args) => {
            args.init_threads()?;
            let config = args.load_config()?;
            let rows = run_bound_verification(&config, args.seed, args.episodes)?;
            let csv_path = args.out.join("bound_verification.csv");
            write_rows(&rows, &csv_path, config.output.json_mirror)?;
            // One stdout line per (check, population size).
            let mut seen: Vec<(String, usize, bool)> = Vec::new();
            for row in rows.iter().filter(|r| r.row_kind == "concentration") {
                let pass = row.pass == "true";
                match seen.iter_mut().find(|(c, n, _)| *c == row.check && *n == row.n_agents) {
                    Some(entry) => entry.2 &= pass,
                    None => seen.push((row.check.clone(), row.n_agents, pass)),
                }
            }
            for (check, n, pass) in &seen {
                println!(
                    "{check} N={n}: {}",
                    if *pass { "PASS" } else { "FAIL" }
                );
            }
            for row in rows.iter().filter(|r| r.row_kind == "gap_bound") {
                println!("{} N={}: {}", row.check, row.n_agents, row.bound);
            }
            println!("wrote {}", csv_path.display());
        }
        Command::DemoDecentralized(args) => {
            args.init_threads()?;
            let config = args.load_config()?;
            let outcome = run_decentralized_demo(&config, args.seed, args.episodes, &args.out)?;
            println!(
                "decentralized: N={} horizon={} mean={}±{}",
                outcome.n_agents, outcome.horizon, outcome.demo_mean, outcome.demo_std_err
            );
            println!(
                "local-mode cross-check: mean={}±{} (gap = {:.2} sigma)",
                outcome.local_mode_mean, outcome.local_mode_std_err, outcome.agreement_sigma
            );
            println!("trace: {}", outcome.trace_path.display());
        }
    }
    Ok(())
}
