//! Localization: turning a distribution-observing policy sequence into one
//! that every agent can execute from its own state alone.
//!
//! The transform precomputes the deterministic flow `{μ_t}` generated by
//! the base sequence and bakes it in: the localized policy at time `t`
//! ignores whatever distribution it is handed and decides as the base
//! policy would at `μ_t`. In the infinite-population limit the two
//! sequences generate exactly the same trajectory, so their values agree;
//! in a finite population only the base sequence sees the empirical
//! distribution, and the gap between the two is what the bound calculators
//! in [`crate::bounds`] control.

use std::sync::Arc;

use crate::dist::Distribution;
use crate::dynamics::{compute_flow, MeanFieldFlow};
use crate::error::Result;
use crate::model::MeanFieldModel;
use crate::policy::{Policy, PolicySequence};

/// A policy with its distribution argument pinned to a fixed value.
pub struct PinnedPolicy {
    base: Arc<dyn Policy>,
    pinned: Distribution,
}

impl PinnedPolicy {
    pub fn new(base: Arc<dyn Policy>, pinned: Distribution) -> Self {
        PinnedPolicy { base, pinned }
    }
}

impl Policy for PinnedPolicy {
    fn decide(&self, state: usize, _state_dist: &Distribution) -> Distribution {
        self.base.decide(state, &self.pinned)
    }

    /// The observed distribution is ignored entirely.
    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
}

/// A localized policy sequence: per-step pinned policies plus the flow they
/// were pinned to. Beyond the stored horizon the final pinned policy
/// repeats. Note a localized sequence is genuinely time-indexed even when
/// its base is stationary; it is never collapsed back to a stationary kind.
#[derive(Clone)]
pub struct LocalizedSequence {
    policies: Vec<Arc<dyn Policy>>,
    flow: MeanFieldFlow,
}

impl LocalizedSequence {
    pub fn policy_at(&self, t: usize) -> &dyn Policy {
        self.policies[t.min(self.policies.len() - 1)].as_ref()
    }

    pub fn policy_arc_at(&self, t: usize) -> Arc<dyn Policy> {
        Arc::clone(&self.policies[t.min(self.policies.len() - 1)])
    }

    pub fn horizon(&self) -> usize {
        self.policies.len() - 1
    }

    /// The flow that was baked into the sequence.
    pub fn flow(&self) -> &MeanFieldFlow {
        &self.flow
    }
}

/// Bakes an already computed flow into `seq`; see [`localize`].
pub fn localize_with_flow(seq: &PolicySequence, flow: MeanFieldFlow) -> PolicySequence {
    let policies = (0..=flow.horizon)
        .map(|t| {
            Arc::new(PinnedPolicy::new(
                seq.policy_arc_at(t),
                flow.mu[t].clone(),
            )) as Arc<dyn Policy>
        })
        .collect();
    PolicySequence::Localized(LocalizedSequence { policies, flow })
}

/// Bakes the flow generated by `seq` from `mu0` into a locally executable
/// sequence: the result at time `t`, evaluated at any distribution, equals
/// `seq` at time `t` evaluated at `flow.mu[t]`.
pub fn localize(
    seq: &PolicySequence,
    mu0: &Distribution,
    model: &dyn MeanFieldModel,
    horizon: usize,
) -> Result<PolicySequence> {
    let flow = compute_flow(mu0, seq, model, horizon)?;
    Ok(localize_with_flow(seq, flow))
}
