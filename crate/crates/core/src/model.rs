//! The environment contract shared by the simulators, the mean-field
//! dynamics, and the bound calculators.

use rand::Rng;

use crate::dist::{Distribution, SpaceSpec};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// A mean-field environment: per-agent reward and transition functions that
/// couple agents only through the population state distribution `μ` and
/// action distribution `ν`.
///
/// Implementations declare their own regularity metadata:
/// * `reward_bound` — a uniform bound `M` with `|reward| ≤ M` everywhere;
/// * `reward_lipschitz` — an `L` with
///   `|r(x,u,μ₁,ν₁) − r(x,u,μ₂,ν₂)| ≤ L·(|μ₁−μ₂|₁ + |ν₁−ν₂|₁)`;
/// * `transition_lipschitz` — the same for the transition law in L1.
///
/// Declared constants are analytic facts supplied by the environment author;
/// [`crate::bounds::estimate_lipschitz`] gives a sampled lower-bound
/// diagnostic only.
pub trait MeanFieldModel: Send + Sync {
    fn spaces(&self) -> SpaceSpec;

    /// Reward `r(x, u, μ, ν)` received by an agent in state `x` playing `u`.
    fn reward(
        &self,
        state: usize,
        action: usize,
        state_dist: &Distribution,
        action_dist: &Distribution,
    ) -> f64;

    /// Transition pmf over next states for an agent in state `x` playing `u`.
    fn transition(
        &self,
        state: usize,
        action: usize,
        state_dist: &Distribution,
        action_dist: &Distribution,
    ) -> Distribution;

    /// Uniform bound on `|reward|`.
    fn reward_bound(&self) -> f64;

    /// Lipschitz constant of the reward in `(μ, ν)` under L1.
    fn reward_lipschitz(&self) -> f64;

    /// Lipschitz constant of the transition pmf in `(μ, ν)` under L1.
    fn transition_lipschitz(&self) -> f64;

    /// True when reward and transition ignore the population action
    /// distribution `ν` entirely (the regime with the sharper gap bound).
    fn action_dist_free(&self) -> bool {
        false
    }
}

/// Sampled sanity check of a model against its own declarations: reward
/// bound honored, transition pmfs valid and of the right length, and the
/// `action_dist_free` flag truthful. Returns the first violation found.
pub fn check_model_contract(model: &dyn MeanFieldModel, trials: usize, seed: u64) -> Result<()> {
    let spaces = model.spaces();
    let mut rng = rng_from_seed(seed);
    for trial in 0..trials {
        let x = rng.random_range(0..spaces.num_states);
        let u = rng.random_range(0..spaces.num_actions);
        let mu = Distribution::random_simplex(spaces.num_states, &mut rng)?;
        let nu = Distribution::random_simplex(spaces.num_actions, &mut rng)?;

        let r = model.reward(x, u, &mu, &nu);
        if !r.is_finite() || r.abs() > model.reward_bound() + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "trial {trial}: reward {r} violates declared bound {}",
                model.reward_bound()
            )));
        }

        let pmf = model.transition(x, u, &mu, &nu);
        if pmf.len() != spaces.num_states {
            return Err(Error::LengthMismatch {
                left: pmf.len(),
                right: spaces.num_states,
            });
        }

        if model.action_dist_free() {
            let nu2 = Distribution::random_simplex(spaces.num_actions, &mut rng)?;
            let r2 = model.reward(x, u, &mu, &nu2);
            let pmf2 = model.transition(x, u, &mu, &nu2);
            if r != r2 || pmf.l1_distance(&pmf2)? != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "trial {trial}: model declares independence of the action \
                     distribution but outputs differ"
                )));
            }
        }
    }
    Ok(())
}
