//! Mean-field control toolkit for cooperative N-agent systems.
//!
//! The crate covers the full pipeline from simulation to verification:
//!
//! * [`dist`], [`model`], [`policy`] — finite state/action spaces,
//!   probability distributions, and the environment and policy contracts;
//! * [`dynamics`] — the deterministic infinite-population recursion
//!   (action mixtures, state propagation, mean rewards, flows, values);
//! * [`mod@localize`] — baking a flow into a policy sequence so agents
//!   can execute it from their own state alone;
//! * [`simulator`] — stochastic N-agent rollouts in global or local
//!   observation mode, Monte-Carlo value estimation, and an exhaustive
//!   enumeration oracle for tiny instances;
//! * [`decentralized`] — per-agent execution with private flow recursions;
//! * [`bounds`] — closed-form envelopes for the value gap between global
//!   and localized execution, and Lipschitz diagnostics;
//! * [`verify`] — Monte-Carlo verification of the concentration envelopes;
//! * [`npg`] — natural-policy-gradient training of a parametric policy on
//!   the infinite-population problem;
//! * [`firm`] — the firm-quality benchmark environment;
//! * [`synthetic`] — randomized environments and policies with exact
//!   regularity constants, for tests and verification harnesses.

pub mod bounds;
pub mod decentralized;
pub mod dist;
pub mod dynamics;
pub mod error;
pub mod firm;
pub mod localize;
pub mod model;
pub mod npg;
pub mod policy;
pub mod seed;
pub mod simulator;
pub mod synthetic;
pub mod verify;

pub use bounds::{
    optimality_gap_bound, optimality_gap_bound_action_free, BoundConstants, BoundValue,
};
pub use dist::{empirical_distribution, Distribution, SpaceSpec};
pub use dynamics::{
    compute_flow, induced_action_distribution, mean_field_value, mean_reward, propagate_state,
    MeanFieldFlow,
};
pub use error::{Error, Result};
pub use localize::{localize, localize_with_flow};
pub use model::MeanFieldModel;
pub use npg::{
    sample_occupancy, train, Checkpoint, LocalizedCheckpoint, ParametricPolicy, TrainerConfig,
};
pub use policy::{policy_sup_distance, Policy, PolicySequence};
pub use simulator::{
    estimate_value, exact_small_system_value, initial_joint_state, rollout, ExecutionMode,
    InitStrategy, JointState, RolloutRecord, ValueEstimate, ValueStart,
};
