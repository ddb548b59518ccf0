//! Closed-form bounds on the value gap between globally informed and
//! localized policy execution, plus sampled Lipschitz diagnostics.
//!
//! All bounds are driven by a handful of composite constants built from
//! the declared environment and policy metadata. With `M_R, L_R, L_P, L_Q`
//! the declared reward bound, reward/transition Lipschitz constants, and
//! policy Lipschitz constant:
//!
//! ```text
//! C_P  = 2 + L_P                      one-step sampling-noise coefficient
//! S̃_P  = 1 + 2·L_P    S̄_P = 1 + L_P   state-propagation sensitivities
//! S_P  = S̃_P + L_Q·S̄_P                per-step growth rate of flow deviation
//! S̃_R  = M_R + 2·L_R  S̄_R = M_R + L_R  mean-reward sensitivities
//! S_R  = S̃_R + L_Q·S̄_R                reward sensitivity to flow deviation
//! ```
//!
//! The discounted gap bounds are finite exactly when `γ·S_P < 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, SpaceSpec};
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::{policy_sup_distance, Policy};
use crate::seed::rng_from_seed;

/// Declared constants plus the derived composites described in the module
/// docs. Construct via [`BoundConstants::new`] so the derived fields always
/// satisfy their defining formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub m_r: f64,
    pub l_r: f64,
    pub l_p: f64,
    pub l_q: f64,
    pub c_p: f64,
    pub s_tilde_p: f64,
    pub s_bar_p: f64,
    pub s_p: f64,
    pub s_tilde_r: f64,
    pub s_bar_r: f64,
    pub s_r: f64,
}

impl BoundConstants {
    pub fn new(m_r: f64, l_r: f64, l_p: f64, l_q: f64) -> Result<Self> {
        for (name, v) in [("m_r", m_r), ("l_r", l_r), ("l_p", l_p), ("l_q", l_q)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "constant {name} must be finite and nonnegative (got {v})"
                )));
            }
        }
        let s_tilde_p = 1.0 + 2.0 * l_p;
        let s_bar_p = 1.0 + l_p;
        let s_tilde_r = m_r + 2.0 * l_r;
        let s_bar_r = m_r + l_r;
        Ok(BoundConstants {
            m_r,
            l_r,
            l_p,
            l_q,
            c_p: 2.0 + l_p,
            s_tilde_p,
            s_bar_p,
            s_p: s_tilde_p + l_q * s_bar_p,
            s_tilde_r,
            s_bar_r,
            s_r: s_tilde_r + l_q * s_bar_r,
        })
    }

    /// Constants from a model's declared metadata plus a policy constant.
    pub fn from_model(model: &dyn MeanFieldModel, policy_lipschitz: f64) -> Result<Self> {
        Self::new(
            model.reward_bound(),
            model.reward_lipschitz(),
            model.transition_lipschitz(),
            policy_lipschitz,
        )
    }
}

/// A closed-form bound, or `Infeasible` when the discount is too large for
/// the geometric error recursion to converge (`γ·S_P ≥ 1`). Infeasibility
/// is an answer, not an error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundValue {
    Finite(f64),
    Infeasible,
}

impl BoundValue {
    pub fn is_feasible(&self) -> bool {
        matches!(self, BoundValue::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            BoundValue::Finite(v) => Some(*v),
            BoundValue::Infeasible => None,
        }
    }
}

impl std::fmt::Display for BoundValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundValue::Finite(v) => write!(f, "{v}"),
            BoundValue::Infeasible => write!(f, "infeasible"),
        }
    }
}

/// Discounted tail factor `[1/(1−γS) − 1/(1−γ)] / (S−1)`, in the
/// algebraically equivalent form `γ / ((1−γS)(1−γ))`, which is regular at
/// `S = 1` (where it equals the analytic limit `γ/(1−γ)²`).
fn discounted_tail_factor(gamma: f64, s: f64) -> f64 {
    gamma / ((1.0 - gamma * s) * (1.0 - gamma))
}

fn check_bound_inputs(n_agents: usize, gamma: f64) -> Result<()> {
    if n_agents == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    Ok(())
}

/// Upper bound on the value gap between the optimal policy sequence and
/// the localized mean-field sequence in an `N`-agent system, general case:
///
/// ```text
/// (2/(1−γ))·(M_R + L_R·√|U|)/√N
///   + ((√|X|+√|U|)/√N) · 2·S_R·C_P · γ/((1−γS_P)(1−γ))
/// ```
///
/// Scales as `(√|X|+√|U|)/√N`; finite iff `γ·S_P < 1`.
pub fn optimality_gap_bound(
    k: &BoundConstants,
    n_agents: usize,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
) -> Result<BoundValue> {
    check_bound_inputs(n_agents, gamma)?;
    if gamma * k.s_p >= 1.0 {
        return Ok(BoundValue::Infeasible);
    }
    let sqrt_n = (n_agents as f64).sqrt();
    let sqrt_x = (num_states as f64).sqrt();
    let sqrt_u = (num_actions as f64).sqrt();
    let concentration = (2.0 / (1.0 - gamma)) * (k.m_r + k.l_r * sqrt_u) / sqrt_n;
    let drift = ((sqrt_x + sqrt_u) / sqrt_n)
        * (2.0 * k.s_r * k.c_p)
        * discounted_tail_factor(gamma, k.s_p);
    Ok(BoundValue::Finite(concentration + drift))
}

/// Sharper gap bound for environments whose reward and transition ignore
/// the population action distribution:
///
/// ```text
/// (2/(1−γ))·M_R/√N + (√|X|/√N) · 4·S_R · γ/((1−γS_P)(1−γ))
/// ```
///
/// Scales as `√|X|/√N`; finite iff `γ·S_P < 1`.
pub fn optimality_gap_bound_action_free(
    k: &BoundConstants,
    n_agents: usize,
    num_states: usize,
    gamma: f64,
) -> Result<BoundValue> {
    check_bound_inputs(n_agents, gamma)?;
    if gamma * k.s_p >= 1.0 {
        return Ok(BoundValue::Infeasible);
    }
    let sqrt_n = (n_agents as f64).sqrt();
    let sqrt_x = (num_states as f64).sqrt();
    let concentration = (2.0 / (1.0 - gamma)) * k.m_r / sqrt_n;
    let drift =
        (sqrt_x / sqrt_n) * (4.0 * k.s_r) * discounted_tail_factor(gamma, k.s_p);
    Ok(BoundValue::Finite(concentration + drift))
}

/// Partial geometric sum `(S^t − 1)/(S − 1)`, with the `S = 1` singularity
/// replaced by its limit `t`.
pub fn geometric_cumsum(rate: f64, steps: usize) -> f64 {
    if rate == 1.0 {
        steps as f64
    } else {
        (rate.powi(steps as i32) - 1.0) / (rate - 1.0)
    }
}

/// Expected L1 gap bound between the empirical action distribution and the
/// action mixture induced at the empirical state distribution: `√|U|/√N`.
pub fn action_mixture_gap_bound(n_agents: usize, num_actions: usize) -> f64 {
    (num_actions as f64).sqrt() / (n_agents as f64).sqrt()
}

/// Expected one-step L1 gap bound between the next empirical state
/// distribution and the deterministic propagation of the current one:
/// `C_P·(√|X|+√|U|)/√N`.
pub fn state_propagation_gap_bound(
    k: &BoundConstants,
    n_agents: usize,
    num_states: usize,
    num_actions: usize,
) -> f64 {
    k.c_p * ((num_states as f64).sqrt() + (num_actions as f64).sqrt())
        / (n_agents as f64).sqrt()
}

/// Expected gap bound between the realized population-average reward and
/// the mean reward at the empirical state distribution:
/// `(M_R + L_R·√|U|)/√N`.
pub fn reward_concentration_bound(k: &BoundConstants, n_agents: usize, num_actions: usize) -> f64 {
    (k.m_r + k.l_r * (num_actions as f64).sqrt()) / (n_agents as f64).sqrt()
}

/// Expected L1 gap bound between the empirical state distribution at time
/// `t` and the deterministic flow, compounding the one-step bound through
/// the growth rate `S_P`:
/// `C_P·(√|X|+√|U|)/√N · (S_P^t − 1)/(S_P − 1)`.
pub fn flow_deviation_bound(
    k: &BoundConstants,
    n_agents: usize,
    num_states: usize,
    num_actions: usize,
    t: usize,
) -> f64 {
    state_propagation_gap_bound(k, n_agents, num_states, num_actions)
        * geometric_cumsum(k.s_p, t)
}

/// What to probe in [`estimate_lipschitz`].
pub enum LipschitzTarget<'a> {
    /// Reward as a function of `(μ, ν)` at random `(x, u)`.
    Reward(&'a dyn MeanFieldModel),
    /// Transition pmf (L1) as a function of `(μ, ν)` at random `(x, u)`.
    Transition(&'a dyn MeanFieldModel),
    /// Policy output (sup over states, L1) as a function of `μ`.
    PolicyStateDist(&'a dyn Policy, SpaceSpec),
}

/// Sampled lower bound on a Lipschitz constant: the max difference ratio
/// over random input pairs (mixing interior simplex points with vertices,
/// so extreme pairs are reachable). A diagnostic for declared constants,
/// never a substitute — a sampled sup is not a sup.
pub fn estimate_lipschitz(target: LipschitzTarget<'_>, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut best: Option<f64> = None;

    let draw = |len: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Distribution> {
        if rng.random::<f64>() < 0.25 {
            Distribution::point_mass(rng.random_range(0..len), len)
        } else {
            Distribution::random_simplex(len, rng)
        }
    };

    for _ in 0..trials {
        let ratio = match &target {
            LipschitzTarget::Reward(model) | LipschitzTarget::Transition(model) => {
                let spaces = model.spaces();
                let x = rng.random_range(0..spaces.num_states);
                let u = rng.random_range(0..spaces.num_actions);
                let mu1 = draw(spaces.num_states, &mut rng)?;
                let mu2 = draw(spaces.num_states, &mut rng)?;
                let nu1 = draw(spaces.num_actions, &mut rng)?;
                let nu2 = draw(spaces.num_actions, &mut rng)?;
                let denom = mu1.l1_distance(&mu2)? + nu1.l1_distance(&nu2)?;
                if denom < 1e-12 {
                    continue;
                }
                let num = match &target {
                    LipschitzTarget::Reward(m) => {
                        (m.reward(x, u, &mu1, &nu1) - m.reward(x, u, &mu2, &nu2)).abs()
                    }
                    LipschitzTarget::Transition(m) => m
                        .transition(x, u, &mu1, &nu1)
                        .l1_distance(&m.transition(x, u, &mu2, &nu2))?,
                    _ => unreachable!(),
                };
                num / denom
            }
            LipschitzTarget::PolicyStateDist(policy, spaces) => {
                let mu1 = draw(spaces.num_states, &mut rng)?;
                let mu2 = draw(spaces.num_states, &mut rng)?;
                let denom = mu1.l1_distance(&mu2)?;
                if denom < 1e-12 {
                    continue;
                }
                policy_sup_distance(*policy, *policy, &mu1, &mu2, *spaces)? / denom
            }
        };
        best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
    }
    best.ok_or(Error::NoValidSamples)
}
