//! Experiment configuration: a strict TOML file with one section per
//! concern. Unknown keys are rejected; omitted keys take the documented
//! defaults. The full configuration round-trips losslessly through
//! serialization, and a stable hash of its canonical JSON form is stamped
//! into every output row for replay.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mfc_core::dist::Distribution;
use mfc_core::firm::{FirmConfig, FirmModel};
use mfc_core::npg::TrainerConfig;
use mfc_core::seed::Fingerprint;
use mfc_core::simulator::InitStrategy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub env: EnvSection,
    pub trainer: TrainerSection,
    pub sweep: SweepSection,
    pub evaluation: EvalSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// Named builtin environment; only "firm" is shipped.
    pub kind: String,
    pub quality_levels: usize,
    pub revenue_weight: f64,
    pub congestion_weight: f64,
    pub investment_cost: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            kind: "firm".into(),
            quality_levels: 10,
            revenue_weight: 1.0,
            congestion_weight: 0.5,
            investment_cost: 0.5,
        }
    }
}

impl EnvSection {
    /// Builds the model, optionally overriding the number of quality
    /// levels (used by the state-space sweep).
    pub fn build(&self, quality_override: Option<usize>) -> Result<FirmModel> {
        if self.kind != "firm" {
            bail!("unknown environment kind {:?} (available: \"firm\")", self.kind);
        }
        let q = quality_override.unwrap_or(self.quality_levels);
        Ok(FirmModel::new(FirmConfig::new(
            q,
            self.revenue_weight,
            self.congestion_weight,
            self.investment_cost,
        )?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    /// Train a fresh policy per sweep cell when no checkpoint is given.
    pub enabled: bool,
    /// Load this checkpoint instead of training.
    pub checkpoint: Option<PathBuf>,
    pub eta: f64,
    pub alpha: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub gamma: f64,
    pub hidden_width: usize,
    pub episode_cap: Option<usize>,
    pub value_trunc_tol: f64,
}

impl Default for TrainerSection {
    fn default() -> Self {
        TrainerSection {
            enabled: true,
            checkpoint: None,
            eta: 1e-3,
            alpha: 1e-3,
            outer_iters: 100,
            inner_iters: 100,
            gamma: 0.9,
            hidden_width: 128,
            episode_cap: None,
            value_trunc_tol: 1e-6,
        }
    }
}

impl TrainerSection {
    /// Trainer config for a given environment size. The occupancy chains
    /// start from the uniform distribution over states (recorded choice).
    pub fn build(&self, num_states: usize, seed: u64) -> Result<TrainerConfig> {
        let mut config = TrainerConfig::new(Distribution::uniform(num_states)?, seed);
        config.eta = self.eta;
        config.alpha = self.alpha;
        config.outer_iters = self.outer_iters;
        config.inner_iters = self.inner_iters;
        config.gamma = self.gamma;
        config.hidden_width = self.hidden_width;
        config.episode_cap = self.episode_cap;
        config.value_trunc_tol = self.value_trunc_tol;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_values: Vec<usize>,
    pub q_values: Vec<usize>,
    /// Population size held fixed during the state-space sweep.
    pub q_sweep_population: usize,
    /// Number of seeds per sweep point.
    pub seeds: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            n_values: vec![10, 20, 50, 100],
            q_values: vec![5, 10, 15],
            q_sweep_population: 50,
            seeds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub gamma: f64,
    pub episodes: usize,
    /// Evaluation horizon is derived from this tolerance.
    pub trunc_tol: f64,
    pub init_strategy: InitStrategy,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            gamma: 0.9,
            episodes: 50,
            trunc_tol: 1e-4,
            init_strategy: InitStrategy::ExactRounding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Also emit rows as a JSON array next to each CSV.
    pub json_mirror: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { json_mirror: false }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.kind != "firm" {
            bail!("unknown environment kind {:?}", self.env.kind);
        }
        if self.env.quality_levels < 2 {
            bail!("quality_levels must be >= 2");
        }
        if !(0.0..1.0).contains(&self.evaluation.gamma) {
            bail!("evaluation gamma must lie in [0, 1)");
        }
        if self.evaluation.trunc_tol <= 0.0 {
            bail!("trunc_tol must be positive");
        }
        if self.evaluation.episodes == 0 {
            bail!("episodes must be >= 1");
        }
        if self.sweep.n_values.is_empty() || self.sweep.q_values.is_empty() {
            bail!("sweep lists must be nonempty");
        }
        if self.sweep.seeds == 0 {
            bail!("need at least one sweep seed");
        }
        Ok(())
    }

    /// Stable hash of the canonical JSON form, stamped into output rows.
    pub fn stable_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut f = Fingerprint::new();
        f.push_bytes(canonical.as_bytes());
        format!("{:016x}", f.finish())
    }
}
