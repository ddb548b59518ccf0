//! The policy contract and policy sequences.
//!
//! A policy maps an agent's own state together with a population state
//! distribution to a distribution over actions. Sequences may be
//! stationary, explicitly time-indexed, or localized (the observed
//! distribution replaced by a precomputed deterministic flow; see
//! [`mod@crate::localize`]).

use std::sync::Arc;

use crate::dist::{Distribution, SpaceSpec};
use crate::error::{Error, Result};
use crate::localize::LocalizedSequence;
use crate::seed::Fingerprint;

/// Decision rule `(x, μ) → distribution over actions`.
///
/// `lipschitz_bound` declares a constant `L` with
/// `|decide(x, μ₁) − decide(x, μ₂)|₁ ≤ L·|μ₁ − μ₂|₁` for every `x`.
pub trait Policy: Send + Sync {
    fn decide(&self, state: usize, state_dist: &Distribution) -> Distribution;

    /// Declared Lipschitz constant in the state-distribution argument.
    fn lipschitz_bound(&self) -> f64;
}

/// Largest per-state L1 gap between two policies evaluated at (possibly
/// different) state distributions:
/// `max_x |a.decide(x, μ_a) − b.decide(x, μ_b)|₁`.
pub fn policy_sup_distance(
    a: &dyn Policy,
    b: &dyn Policy,
    mu_a: &Distribution,
    mu_b: &Distribution,
    spaces: SpaceSpec,
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for x in 0..spaces.num_states {
        let da = a.decide(x, mu_a);
        let db = b.decide(x, mu_b);
        sup = sup.max(da.l1_distance(&db)?);
    }
    Ok(sup)
}

/// Policy that plays every action with equal probability.
#[derive(Clone, Debug)]
pub struct UniformPolicy {
    num_actions: usize,
}

impl UniformPolicy {
    pub fn new(num_actions: usize) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::InvalidParameter("no actions".into()));
        }
        Ok(UniformPolicy { num_actions })
    }
}

impl Policy for UniformPolicy {
    fn decide(&self, _state: usize, _state_dist: &Distribution) -> Distribution {
        Distribution::uniform(self.num_actions).expect("num_actions >= 1")
    }

    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
}

/// Policy given by one action distribution per state, ignoring the
/// population distribution.
#[derive(Clone, Debug)]
pub struct TabularPolicy {
    rows: Vec<Distribution>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<Distribution>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("no states".into()));
        }
        let len = rows[0].len();
        for row in &rows {
            if row.len() != len {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: len,
                });
            }
        }
        Ok(TabularPolicy { rows })
    }

    /// Deterministic policy playing `action` in every state.
    pub fn constant(action: usize, spaces: SpaceSpec) -> Result<Self> {
        let row = Distribution::point_mass(action, spaces.num_actions)?;
        Ok(TabularPolicy {
            rows: vec![row; spaces.num_states],
        })
    }
}

impl Policy for TabularPolicy {
    fn decide(&self, state: usize, _state_dist: &Distribution) -> Distribution {
        self.rows[state].clone()
    }

    fn lipschitz_bound(&self) -> f64 {
        0.0
    }
}

/// A (possibly non-stationary) sequence of policies. Indexing beyond the
/// stored horizon repeats the final policy: value computations are
/// truncated, so the tail choice only touches sub-tolerance mass, and a
/// constant tail is reproducible.
#[derive(Clone)]
pub enum PolicySequence {
    /// The same policy at every step.
    Stationary(Arc<dyn Policy>),
    /// One policy per step up to the stored horizon.
    TimeIndexed(Vec<Arc<dyn Policy>>),
    /// A base sequence with the observed distribution replaced by a baked
    /// deterministic flow.
    Localized(LocalizedSequence),
}

impl PolicySequence {
    pub fn stationary(policy: Arc<dyn Policy>) -> Self {
        PolicySequence::Stationary(policy)
    }

    pub fn time_indexed(policies: Vec<Arc<dyn Policy>>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidParameter("empty policy sequence".into()));
        }
        Ok(PolicySequence::TimeIndexed(policies))
    }

    pub fn policy_at(&self, t: usize) -> &dyn Policy {
        match self {
            PolicySequence::Stationary(p) => p.as_ref(),
            PolicySequence::TimeIndexed(ps) => ps[t.min(ps.len() - 1)].as_ref(),
            PolicySequence::Localized(seq) => seq.policy_at(t),
        }
    }

    pub fn policy_arc_at(&self, t: usize) -> Arc<dyn Policy> {
        match self {
            PolicySequence::Stationary(p) => Arc::clone(p),
            PolicySequence::TimeIndexed(ps) => Arc::clone(&ps[t.min(ps.len() - 1)]),
            PolicySequence::Localized(seq) => seq.policy_arc_at(t),
        }
    }

    /// Stored horizon for the non-stationary kinds.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            PolicySequence::Stationary(_) => None,
            PolicySequence::TimeIndexed(ps) => Some(ps.len() - 1),
            PolicySequence::Localized(seq) => Some(seq.horizon()),
        }
    }

    /// Largest declared Lipschitz constant among the policies used up to
    /// `t_max` inclusive.
    pub fn lipschitz_bound(&self, t_max: usize) -> f64 {
        match self {
            PolicySequence::Stationary(p) => p.lipschitz_bound(),
            _ => (0..=t_max)
                .map(|t| self.policy_at(t).lipschitz_bound())
                .fold(0.0, f64::max),
        }
    }

    /// Stable behavioral identity: hashes decisions on a probe grid, so two
    /// sequences that decide identically fingerprint identically regardless
    /// of representation.
    pub fn fingerprint(&self, spaces: SpaceSpec) -> u64 {
        let mut f = Fingerprint::new();
        let kind = match self {
            PolicySequence::Stationary(_) => 0u64,
            PolicySequence::TimeIndexed(_) => 1,
            PolicySequence::Localized(_) => 2,
        };
        f.push_u64(kind);
        let t_probe = self.horizon().unwrap_or(0).min(8);
        for t in 0..=t_probe {
            hash_policy_decisions(self.policy_at(t), spaces, &mut f);
        }
        f.finish()
    }
}

impl std::fmt::Debug for PolicySequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicySequence::Stationary(_) => write!(f, "PolicySequence::Stationary"),
            PolicySequence::TimeIndexed(ps) => {
                write!(f, "PolicySequence::TimeIndexed(len={})", ps.len())
            }
            PolicySequence::Localized(seq) => {
                write!(f, "PolicySequence::Localized(horizon={})", seq.horizon())
            }
        }
    }
}

fn hash_policy_decisions(policy: &dyn Policy, spaces: SpaceSpec, f: &mut Fingerprint) {
    let probes = probe_distributions(spaces.num_states);
    for mu in &probes {
        for x in 0..spaces.num_states {
            let d = policy.decide(x, mu);
            for &w in d.weights() {
                f.push_f64(w);
            }
        }
    }
    f.push_f64(policy.lipschitz_bound());
}

fn probe_distributions(num_states: usize) -> Vec<Distribution> {
    let mut probes = vec![Distribution::uniform(num_states).expect("num_states >= 1")];
    probes.push(Distribution::point_mass(0, num_states).expect("index 0 valid"));
    if num_states > 1 {
        probes.push(
            Distribution::point_mass(num_states - 1, num_states).expect("last index valid"),
        );
        // Ascending ramp, normalized.
        let total: f64 = (1..=num_states).map(|k| k as f64).sum();
        probes.push(
            Distribution::new((1..=num_states).map(|k| k as f64 / total).collect())
                .expect("ramp sums to 1"),
        );
    }
    probes
}
