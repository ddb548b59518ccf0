//! Fully decentralized execution of a localized policy.
//!
//! Each agent keeps its *own* copy of the deterministic flow recursion:
//! starting from the shared initial distribution it advances its private
//! estimate with the mean-field propagation step and decides on actions
//! from `(own state, private estimate)` alone. Policy calls never see the
//! empirical population distribution — only the environment does, when it
//! draws rewards and next states. Agents therefore need the transition
//! model (to propagate) but not the reward function.

use serde::{Deserialize, Serialize};

use crate::dist::{empirical_distribution, Distribution};
use crate::dynamics::propagate_state;
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::Policy;
use crate::seed::rng_from_seed;

/// Trace of one decentralized run. The per-agent flow recursions are
/// verified to agree bit-for-bit and stored once as `shared_flow`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecentralizedTrace {
    pub n_agents: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub seed: u64,
    /// The flow every agent reconstructed locally, `μ_0 … μ_T`.
    pub shared_flow: Vec<Distribution>,
    /// Per-agent state paths, `[agent][t]`, length `horizon + 1`.
    pub agent_states: Vec<Vec<usize>>,
    /// Per-agent action paths, `[agent][t]`, length `horizon + 1`.
    pub agent_actions: Vec<Vec<usize>>,
    /// Discounted population-average return over `t = 0..=horizon`.
    pub discounted_return: f64,
    /// What the policies observed ("agent-local flow", never empirical).
    pub policy_observation: String,
}

impl DecentralizedTrace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Executes `policy` for `horizon + 1` steps with every agent running the
/// flow recursion privately. Errors if any two agents' private flows ever
/// disagree (they cannot: the recursion is deterministic and identical).
pub fn decentralized_rollout(
    policy: &dyn Policy,
    model: &dyn MeanFieldModel,
    mu0: &Distribution,
    joint0: &[usize],
    gamma: f64,
    horizon: usize,
    seed: u64,
) -> Result<DecentralizedTrace> {
    if joint0.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    let spaces = model.spaces();
    let n = joint0.len();
    let mut rng = rng_from_seed(seed);

    // Private per-agent flow estimates, all initialized from μ0.
    let mut local_flows: Vec<Distribution> = vec![mu0.clone(); n];
    let mut states: Vec<usize> = joint0.to_vec();
    let mut agent_states: Vec<Vec<usize>> = vec![Vec::with_capacity(horizon + 1); n];
    let mut agent_actions: Vec<Vec<usize>> = vec![Vec::with_capacity(horizon + 1); n];
    let mut shared_flow: Vec<Distribution> = Vec::with_capacity(horizon + 1);
    let mut total = 0.0;
    let mut discount = 1.0;

    for _t in 0..=horizon {
        // All private estimates must agree; archive one copy.
        for flow in &local_flows[1..] {
            if flow != &local_flows[0] {
                return Err(Error::InvalidParameter(
                    "agent flow recursions diverged".into(),
                ));
            }
        }
        shared_flow.push(local_flows[0].clone());

        // Agents act on their own state and private flow estimate.
        let mut actions = Vec::with_capacity(n);
        for (i, &x) in states.iter().enumerate() {
            let u = policy.decide(x, &local_flows[i]).sample(&mut rng);
            actions.push(u);
            agent_states[i].push(x);
            agent_actions[i].push(u);
        }

        // The environment runs on the true empirical distributions.
        let mu_emp = empirical_distribution(&states, spaces.num_states)?;
        let nu_emp = empirical_distribution(&actions, spaces.num_actions)?;
        let avg_reward: f64 = states
            .iter()
            .zip(&actions)
            .map(|(&x, &u)| model.reward(x, u, &mu_emp, &nu_emp))
            .sum::<f64>()
            / n as f64;
        total += discount * avg_reward;
        discount *= gamma;

        let next: Vec<usize> = states
            .iter()
            .zip(&actions)
            .map(|(&x, &u)| model.transition(x, u, &mu_emp, &nu_emp).sample(&mut rng))
            .collect();

        // Each agent advances its private estimate with the model.
        for flow in local_flows.iter_mut() {
            *flow = propagate_state(flow, policy, model)?;
        }
        states = next;
    }

    Ok(DecentralizedTrace {
        n_agents: n,
        horizon,
        gamma,
        seed,
        shared_flow,
        agent_states,
        agent_actions,
        discounted_return: total,
        policy_observation: "agent-local flow".into(),
    })
}
