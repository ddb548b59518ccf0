//! Deterministic infinite-population dynamics.
//!
//! In the infinite-agent limit the population state distribution evolves by
//! a deterministic recursion: given `μ_t` and the step's policy `π_t`,
//!
//! ```text
//! ν_t      = Σ_x π_t(x, μ_t) · μ_t(x)                         (action mixture)
//! μ_{t+1}  = Σ_x Σ_u P(x, u, μ_t, ν_t) · π_t(x, μ_t)(u) · μ_t(x)
//! r̄_t      = Σ_x Σ_u r(x, u, μ_t, ν_t) · π_t(x, μ_t)(u) · μ_t(x)
//! ```
//!
//! and the value of a policy sequence is the discounted sum `Σ_t γ^t r̄_t`,
//! truncated here at an analytically controlled horizon.

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, SpaceSpec};
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::{Policy, PolicySequence};

/// Action distribution induced by a policy at state distribution `μ`:
/// the `μ`-weighted mixture of the per-state action distributions.
pub fn induced_action_distribution(
    mu: &Distribution,
    policy: &dyn Policy,
) -> Result<Distribution> {
    let mut acc: Option<Vec<f64>> = None;
    for (x, mass) in mu.support() {
        let row = policy.decide(x, mu);
        let acc = acc.get_or_insert_with(|| vec![0.0; row.len()]);
        if row.len() != acc.len() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: acc.len(),
            });
        }
        for (k, w) in row.support() {
            acc[k] += w * mass;
        }
    }
    Distribution::new(acc.expect("state distribution has nonempty support"))
}

/// One deterministic step of the infinite-population state distribution.
pub fn propagate_state(
    mu: &Distribution,
    policy: &dyn Policy,
    model: &dyn MeanFieldModel,
) -> Result<Distribution> {
    let spaces = model.spaces();
    let nu = induced_action_distribution(mu, policy)?;
    let mut acc = vec![0.0; spaces.num_states];
    for (x, mass) in mu.support() {
        let row = policy.decide(x, mu);
        for (u, pu) in row.support() {
            let pmf = model.transition(x, u, mu, &nu);
            if pmf.len() != spaces.num_states {
                return Err(Error::LengthMismatch {
                    left: pmf.len(),
                    right: spaces.num_states,
                });
            }
            let w = pu * mass;
            for (k, p) in pmf.support() {
                acc[k] += p * w;
            }
        }
    }
    Distribution::new(acc)
}

/// Population-average reward at state distribution `μ` under `policy`.
pub fn mean_reward(
    mu: &Distribution,
    policy: &dyn Policy,
    model: &dyn MeanFieldModel,
) -> Result<f64> {
    let nu = induced_action_distribution(mu, policy)?;
    let mut total = 0.0;
    for (x, mass) in mu.support() {
        let row = policy.decide(x, mu);
        for (u, pu) in row.support() {
            total += model.reward(x, u, mu, &nu) * pu * mass;
        }
    }
    Ok(total)
}

/// Precomputed deterministic trajectory of infinite-population state and
/// action distributions. This is the object that makes localized execution
/// possible: every agent can reproduce it from `μ_0` alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldFlow {
    /// State distributions `μ_0 … μ_T`, length `horizon + 1`.
    pub mu: Vec<Distribution>,
    /// Action distributions `ν_0 … ν_T`, length `horizon + 1`.
    pub nu: Vec<Distribution>,
    pub horizon: usize,
    /// Behavioral fingerprint of the generating policy sequence.
    pub source_policy_hash: u64,
}

impl MeanFieldFlow {
    pub fn state_dist(&self, t: usize) -> Option<&Distribution> {
        self.mu.get(t)
    }

    /// Recomputes the recursion and checks the stored trajectory against it.
    pub fn validate(&self, seq: &PolicySequence, model: &dyn MeanFieldModel) -> Result<()> {
        if self.mu.len() != self.horizon + 1 || self.nu.len() != self.horizon + 1 {
            return Err(Error::LengthMismatch {
                left: self.mu.len(),
                right: self.horizon + 1,
            });
        }
        for t in 0..=self.horizon {
            let nu = induced_action_distribution(&self.mu[t], seq.policy_at(t))?;
            if nu.l1_distance(&self.nu[t])? > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "stored action distribution at t = {t} does not match recursion"
                )));
            }
            if t < self.horizon {
                let next = propagate_state(&self.mu[t], seq.policy_at(t), model)?;
                if next.l1_distance(&self.mu[t + 1])? > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "stored state distribution at t = {} does not match recursion",
                        t + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Iterates the deterministic recursion for `horizon` steps from `μ_0`.
/// Bit-identical across repeated calls with identical inputs.
pub fn compute_flow(
    mu0: &Distribution,
    seq: &PolicySequence,
    model: &dyn MeanFieldModel,
    horizon: usize,
) -> Result<MeanFieldFlow> {
    let spaces = model.spaces();
    check_state_dist(mu0, spaces)?;
    let mut mu = Vec::with_capacity(horizon + 1);
    let mut nu = Vec::with_capacity(horizon + 1);
    mu.push(mu0.clone());
    for t in 0..=horizon {
        let policy = seq.policy_at(t);
        nu.push(induced_action_distribution(&mu[t], policy)?);
        if t < horizon {
            let next = propagate_state(&mu[t], policy, model)?;
            mu.push(next);
        }
    }
    Ok(MeanFieldFlow {
        mu,
        nu,
        horizon,
        source_policy_hash: seq.fingerprint(spaces),
    })
}

/// Smallest horizon `T` whose discarded tail is below `tol`:
/// `bound · γ^(T+1) / (1−γ) ≤ tol`.
pub fn truncation_horizon(reward_bound: f64, gamma: f64, tol: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(
            "truncation tolerance must be positive".into(),
        ));
    }
    if reward_bound <= 0.0 || gamma == 0.0 {
        return Ok(0);
    }
    let mut t = 0usize;
    let mut tail = reward_bound * gamma / (1.0 - gamma);
    while tail > tol {
        t += 1;
        tail *= gamma;
    }
    Ok(t)
}

/// Discounted value of a policy sequence in the infinite-population limit,
/// truncated so the reported value is within `trunc_tol` of the infinite
/// sum. Returns `(value, horizon_used)`.
pub fn mean_field_value(
    mu0: &Distribution,
    seq: &PolicySequence,
    model: &dyn MeanFieldModel,
    gamma: f64,
    trunc_tol: f64,
) -> Result<(f64, usize)> {
    check_state_dist(mu0, model.spaces())?;
    let horizon = truncation_horizon(model.reward_bound(), gamma, trunc_tol)?;
    let mut mu = mu0.clone();
    let mut value = 0.0;
    let mut discount = 1.0;
    for t in 0..=horizon {
        let policy = seq.policy_at(t);
        value += discount * mean_reward(&mu, policy, model)?;
        if t < horizon {
            mu = propagate_state(&mu, policy, model)?;
            discount *= gamma;
        }
    }
    Ok((value, horizon))
}

fn check_state_dist(mu: &Distribution, spaces: SpaceSpec) -> Result<()> {
    if mu.len() != spaces.num_states {
        return Err(Error::LengthMismatch {
            left: mu.len(),
            right: spaces.num_states,
        });
    }
    Ok(())
}
