//! Natural-policy-gradient training of a stationary parametric policy on
//! the infinite-population control problem.
//!
//! The outer loop ascends `Φ ← Φ + η·w`, where `w` approximates the
//! natural gradient direction: the least-squares fit of the scaled
//! advantage onto the score function under the discounted occupancy
//! measure of the current policy. The inner loop solves that regression by
//! SGD, one occupancy sample per step:
//!
//! ```text
//! h = (wᵀ∇logπ(u|x,μ) − Â/(1−γ)) · ∇logπ(u|x,μ),    w ← w − α·h
//! ```
//!
//! Occupancy samples and unbiased advantage estimates come from a
//! two-phase geometric-stopping sampler over the single-representative
//! mean-field chain (state sampled, distribution propagated
//! deterministically).

mod parametric;

pub use parametric::ParametricPolicy;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::Distribution;
use crate::dynamics::{induced_action_distribution, mean_field_value, propagate_state};
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::{Policy, PolicySequence};
use crate::seed::rng_from_seed;
use std::sync::Arc;

/// Hyperparameters of the trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Outer learning rate `η`.
    pub eta: f64,
    /// Inner (SGD) learning rate `α`.
    pub alpha: f64,
    /// Outer iterations `J`.
    pub outer_iters: usize,
    /// Inner SGD steps `L` per outer iteration.
    pub inner_iters: usize,
    /// Discount `γ`.
    pub gamma: f64,
    /// Initial state distribution the occupancy chains start from.
    pub mu0: Distribution,
    /// Seed for everything stochastic in the run.
    pub seed: u64,
    /// Hidden width of the policy network.
    pub hidden_width: usize,
    /// Hard cap on each geometric sampling phase; `None` derives
    /// `ceil(10/(1−γ))`. Truncation bias is at most
    /// `reward_bound·γ^cap/(1−γ)`.
    pub episode_cap: Option<usize>,
    /// Tolerance for the per-iterate value evaluations.
    pub value_trunc_tol: f64,
}

impl TrainerConfig {
    pub fn new(mu0: Distribution, seed: u64) -> Self {
        TrainerConfig {
            eta: 1e-3,
            alpha: 1e-3,
            outer_iters: 100,
            inner_iters: 100,
            gamma: 0.9,
            mu0,
            seed,
            hidden_width: 128,
            episode_cap: None,
            value_trunc_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 || self.alpha <= 0.0 {
            return Err(Error::InvalidParameter(
                "learning rates must be positive".into(),
            ));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidParameter(
                "iteration counts must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidDiscount(self.gamma));
        }
        if self.hidden_width == 0 {
            return Err(Error::InvalidParameter("hidden width must be >= 1".into()));
        }
        if self.value_trunc_tol <= 0.0 {
            return Err(Error::InvalidParameter(
                "value truncation tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_episode_cap(&self) -> usize {
        self.episode_cap
            .unwrap_or_else(|| (10.0 / (1.0 - self.gamma)).ceil() as usize)
    }
}

/// One draw from the discounted occupancy measure, with an unbiased
/// advantage estimate attached.
#[derive(Clone, Debug)]
pub struct OccupancySample {
    pub state: usize,
    pub state_dist: Distribution,
    pub action: usize,
    pub advantage_estimate: f64,
    /// Geometric stopping time at which the triple was accepted.
    pub stop_time: usize,
}

/// Single-representative mean-field chain state.
struct Chain {
    x: usize,
    mu: Distribution,
    u: usize,
    nu: Distribution,
}

impl Chain {
    fn advance<R: Rng>(
        &mut self,
        policy: &dyn Policy,
        model: &dyn MeanFieldModel,
        rng: &mut R,
    ) -> Result<()> {
        self.x = model.transition(self.x, self.u, &self.mu, &self.nu).sample(rng);
        self.mu = propagate_state(&self.mu, policy, model)?;
        self.u = policy.decide(self.x, &self.mu).sample(rng);
        self.nu = induced_action_distribution(&self.mu, policy)?;
        Ok(())
    }
}

/// Draws `(x, μ, u)` from the discounted occupancy measure of `policy`
/// started at `mu0`, together with an unbiased estimate of the advantage
/// `Â = 2·(Q̂ − V̂)`.
///
/// Phase 1 runs the chain to a geometric stopping time `T` (stop
/// probability `1−γ` per step) and accepts `(x_T, μ_T, u_T)`. Phase 2
/// accumulates rewards along a second geometric-length tail: with
/// probability ½ it keeps `u_T` as the first action and books the total
/// into `Q̂`, otherwise it resamples the first action from the policy and
/// books into `V̂` (the branch not taken stays 0). The reward of the
/// starting step is included, so each branch's expectation is the
/// discounted action-value / state-value at the accepted triple. Both
/// phases are truncated at `episode_cap` steps.
pub fn sample_occupancy(
    policy: &dyn Policy,
    model: &dyn MeanFieldModel,
    mu0: &Distribution,
    gamma: f64,
    rng: &mut ChaCha8Rng,
    episode_cap: usize,
) -> Result<OccupancySample> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    if episode_cap == 0 {
        return Err(Error::InvalidParameter("episode cap must be >= 1".into()));
    }
    let stop_prob = 1.0 - gamma;

    let x0 = mu0.sample(rng);
    let u0 = policy.decide(x0, mu0).sample(rng);
    let mut chain = Chain {
        x: x0,
        mu: mu0.clone(),
        u: u0,
        nu: induced_action_distribution(mu0, policy)?,
    };

    // Phase 1: geometric stop, then accept the visited triple.
    let mut t = 0usize;
    loop {
        if rng.random::<f64>() < stop_prob || t >= episode_cap {
            break;
        }
        chain.advance(policy, model, rng)?;
        t += 1;
    }
    let accepted_state = chain.x;
    let accepted_mu = chain.mu.clone();
    let accepted_action = chain.u;

    // Phase 2: pick the branch, then roll a geometric-length reward sum.
    let is_q_branch = rng.random::<f64>() < 0.5;
    if !is_q_branch {
        chain.u = policy.decide(chain.x, &chain.mu).sample(rng);
    }
    let mut sum_rewards = model.reward(chain.x, chain.u, &chain.mu, &chain.nu);
    let mut steps = 0usize;
    loop {
        if rng.random::<f64>() < stop_prob || steps >= episode_cap {
            break;
        }
        chain.advance(policy, model, rng)?;
        sum_rewards += model.reward(chain.x, chain.u, &chain.mu, &chain.nu);
        steps += 1;
    }

    let advantage_estimate = if is_q_branch {
        2.0 * sum_rewards
    } else {
        -2.0 * sum_rewards
    };
    debug_assert!(advantage_estimate.is_finite());

    Ok(OccupancySample {
        state: accepted_state,
        state_dist: accepted_mu,
        action: accepted_action,
        advantage_estimate,
        stop_time: t,
    })
}

/// Runs `L` SGD steps on the advantage regression from `w = 0` and returns
/// the average of the iterates `w_1 … w_L`.
pub fn npg_direction(
    policy: &ParametricPolicy,
    model: &dyn MeanFieldModel,
    config: &TrainerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    config.validate()?;
    let d = policy.param_count();
    let cap = config.effective_episode_cap();
    let scale = 1.0 / (1.0 - config.gamma);
    let mut w = vec![0.0; d];
    let mut w_sum = vec![0.0; d];
    for l in 0..config.inner_iters {
        let sample = sample_occupancy(policy, model, &config.mu0, config.gamma, rng, cap)?;
        let (_, grad) = policy.log_prob_and_grad(sample.state, &sample.state_dist, sample.action);
        let along: f64 = w.iter().zip(&grad).map(|(wi, gi)| wi * gi).sum();
        let coeff = along - sample.advantage_estimate * scale;
        for ((wi, gi), si) in w.iter_mut().zip(&grad).zip(w_sum.iter_mut()) {
            *wi -= config.alpha * coeff * gi;
            if !wi.is_finite() {
                return Err(Error::NonFiniteGradient { step: l });
            }
            *si += *wi;
        }
    }
    let inv = 1.0 / config.inner_iters as f64;
    for s in w_sum.iter_mut() {
        *s *= inv;
    }
    Ok(w_sum)
}

/// Output of a training run: the parameter iterates `Φ_1 … Φ_J`, the
/// deterministic value of each, and summary statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainResult {
    pub iterates: Vec<Vec<f64>>,
    /// Value of each iterate from `mu0` (exact up to truncation tolerance).
    pub values: Vec<f64>,
    pub initial_value: f64,
    pub best_index: usize,
    pub best_value: f64,
    /// Mean value across the iterates.
    pub average_value: f64,
    /// Wall-clock seconds per outer iteration (metadata only).
    pub iteration_seconds: Vec<f64>,
}

impl TrainResult {
    pub fn best_policy(
        &self,
        template: &ParametricPolicy,
    ) -> Result<ParametricPolicy> {
        let mut policy = template.clone();
        policy.set_params(&self.iterates[self.best_index])?;
        Ok(policy)
    }
}

/// Natural-policy-gradient loop: `J` outer iterations, each computing a
/// direction with a fresh inner SGD (reset to `w = 0`) and stepping
/// `Φ_{j+1} = Φ_j + η·w_j`. Deterministic given `config.seed`.
pub fn train(
    policy0: &ParametricPolicy,
    model: &dyn MeanFieldModel,
    config: &TrainerConfig,
) -> Result<TrainResult> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let mut policy = policy0.clone();

    let value_of = |p: &ParametricPolicy| -> Result<f64> {
        let seq = PolicySequence::stationary(Arc::new(p.clone()) as Arc<dyn Policy>);
        Ok(mean_field_value(
            &config.mu0,
            &seq,
            model,
            config.gamma,
            config.value_trunc_tol,
        )?
        .0)
    };

    let initial_value = value_of(&policy)?;
    let mut iterates = Vec::with_capacity(config.outer_iters);
    let mut values = Vec::with_capacity(config.outer_iters);
    let mut iteration_seconds = Vec::with_capacity(config.outer_iters);

    for _j in 0..config.outer_iters {
        let started = std::time::Instant::now();
        let direction = npg_direction(&policy, model, config, &mut rng)?;
        policy.add_scaled(&direction, config.eta)?;
        iterates.push(policy.params());
        values.push(value_of(&policy)?);
        iteration_seconds.push(started.elapsed().as_secs_f64());
    }

    let (best_index, best_value) = values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("values are finite"))
        .expect("at least one iterate");
    let average_value = values.iter().sum::<f64>() / values.len() as f64;

    Ok(TrainResult {
        iterates,
        values,
        initial_value,
        best_index,
        best_value,
        average_value,
        iteration_seconds,
    })
}

/// Serialized policy: parameters, architecture, and the trainer config
/// that produced it, with a version tag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub hidden_width: usize,
    pub params: Vec<f64>,
    pub policy_lipschitz: f64,
    pub trainer: TrainerConfig,
}

impl Checkpoint {
    pub fn from_policy(policy: &ParametricPolicy, trainer: TrainerConfig) -> Self {
        let spaces = policy.spaces();
        Checkpoint {
            version: env!("CARGO_PKG_VERSION").to_string(),
            num_states: spaces.num_states,
            num_actions: spaces.num_actions,
            hidden_width: policy.hidden_width(),
            params: policy.params(),
            policy_lipschitz: policy.lipschitz_upper_bound(),
            trainer,
        }
    }

    pub fn to_policy(&self) -> Result<ParametricPolicy> {
        let spaces = crate::dist::SpaceSpec::new(self.num_states, self.num_actions)?;
        ParametricPolicy::from_parts(spaces, self.hidden_width, &self.params)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Serialized localized sequence: the base policy's parameters plus the
/// flow it was pinned to. Rebuilding gives a sequence that decides
/// identically to the original localization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedCheckpoint {
    pub base: Checkpoint,
    pub flow: crate::dynamics::MeanFieldFlow,
}

impl LocalizedCheckpoint {
    pub fn new(base: Checkpoint, flow: crate::dynamics::MeanFieldFlow) -> Self {
        LocalizedCheckpoint { base, flow }
    }

    pub fn to_sequence(&self) -> Result<PolicySequence> {
        let policy = self.base.to_policy()?;
        let seq = PolicySequence::stationary(Arc::new(policy) as Arc<dyn Policy>);
        Ok(crate::localize::localize_with_flow(&seq, self.flow.clone()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
