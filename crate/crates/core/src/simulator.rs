//! Stochastic simulation of the finite N-agent system and Monte-Carlo
//! value estimation.
//!
//! Agents share one policy per step. In *global* mode the policy observes
//! the empirical state distribution of the population; in *local* mode it
//! observes a precomputed deterministic flow instead. The environment
//! itself always consumes the true empirical distributions — only the
//! policy's observation is replaced.
//!
//! Everything stochastic is driven by explicit seeds; per-episode seeds
//! are derived from a base seed and the episode index, so Monte-Carlo runs
//! are reproducible and episodes parallelize without shared state.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::dist::{empirical_distribution, Distribution};
use crate::dynamics::MeanFieldFlow;
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::{Policy, PolicySequence};
use crate::seed::{derive_seed, rng_from_seed};

/// States of all agents at one instant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointState {
    pub states: Vec<usize>,
}

impl JointState {
    pub fn new(states: Vec<usize>, num_states: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        for &x in &states {
            if x >= num_states {
                return Err(Error::IndexOutOfRange {
                    index: x,
                    domain: num_states,
                });
            }
        }
        Ok(JointState { states })
    }

    pub fn n_agents(&self) -> usize {
        self.states.len()
    }
}

/// How to build an initial joint state from a target distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Deterministic largest-remainder rounding of `N·μ0`, ties broken by
    /// ascending state index; reproduces `μ0` exactly whenever every
    /// `N·μ0(x)` is an integer.
    ExactRounding,
    /// Independent draws from `μ0` on the seeded stream.
    IidSample,
}

impl std::fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitStrategy::ExactRounding => write!(f, "exact_rounding"),
            InitStrategy::IidSample => write!(f, "iid_sample"),
        }
    }
}

/// Builds an initial joint state whose empirical distribution matches
/// `mu0` per the chosen strategy. Output lists agents in ascending state
/// index blocks for the rounding strategy.
pub fn initial_joint_state(
    mu0: &Distribution,
    n_agents: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<JointState> {
    if n_agents == 0 {
        return Err(Error::EmptyPopulation);
    }
    let states = match strategy {
        InitStrategy::ExactRounding => {
            let n = n_agents as f64;
            let mut counts: Vec<usize> = Vec::with_capacity(mu0.len());
            let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(mu0.len());
            let mut assigned = 0usize;
            for (x, &w) in mu0.weights().iter().enumerate() {
                let target = n * w;
                let base = target.floor() as usize;
                counts.push(base);
                assigned += base;
                remainders.push((target - base as f64, x));
            }
            // Largest remainder first; ties go to the lower state index.
            remainders.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("remainders are finite")
                    .then(a.1.cmp(&b.1))
            });
            let mut leftover = n_agents - assigned.min(n_agents);
            for &(_, x) in &remainders {
                if leftover == 0 {
                    break;
                }
                counts[x] += 1;
                leftover -= 1;
            }
            let mut states = Vec::with_capacity(n_agents);
            for (x, &c) in counts.iter().enumerate() {
                states.extend(std::iter::repeat_n(x, c));
            }
            states
        }
        InitStrategy::IidSample => {
            let mut rng = rng_from_seed(seed);
            (0..n_agents).map(|_| mu0.sample(&mut rng)).collect()
        }
    };
    JointState::new(states, mu0.len())
}

/// What the policy observes while the environment runs on empirical data.
#[derive(Clone, Debug)]
pub enum ExecutionMode {
    /// Policies observe the empirical state distribution.
    Global,
    /// Policies observe the precomputed flow; requires
    /// `flow.horizon >= rollout horizon`.
    Local(MeanFieldFlow),
}

impl ExecutionMode {
    pub fn label(&self) -> &'static str {
        match self {
            ExecutionMode::Global => "global",
            ExecutionMode::Local(_) => "local",
        }
    }
}

/// Everything produced by one synchronous step of the population.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next: JointState,
    pub actions: Vec<usize>,
    /// Empirical state distribution at the current step.
    pub state_dist: Distribution,
    /// Empirical action distribution of the sampled actions.
    pub action_dist: Distribution,
    pub rewards: Vec<f64>,
}

/// Advances every agent one step: actions are drawn from the policy at the
/// observed distribution (empirical or flow, per `mode`); rewards and next
/// states always use the true empirical `(μ_t, ν_t)`.
///
/// Consumes randomness in a fixed order (all actions by agent index, then
/// all transitions by agent index).
pub fn step<R: Rng>(
    joint: &JointState,
    policy: &dyn Policy,
    mode: &ExecutionMode,
    t: usize,
    model: &dyn MeanFieldModel,
    rng: &mut R,
) -> Result<StepOutcome> {
    let spaces = model.spaces();
    let state_dist = empirical_distribution(&joint.states, spaces.num_states)?;
    let observed: &Distribution = match mode {
        ExecutionMode::Global => &state_dist,
        ExecutionMode::Local(flow) => {
            flow.state_dist(t).ok_or(Error::FlowHorizonExceeded {
                t,
                horizon: flow.horizon,
            })?
        }
    };

    // The policy row for a state is the same for every agent in it.
    let mut rows: Vec<Option<Distribution>> = vec![None; spaces.num_states];
    let mut actions = Vec::with_capacity(joint.n_agents());
    for &x in &joint.states {
        let row = rows[x].get_or_insert_with(|| policy.decide(x, observed));
        actions.push(row.sample(rng));
    }
    let action_dist = empirical_distribution(&actions, spaces.num_actions)?;

    let mut reward_cells: Vec<Option<f64>> = vec![None; spaces.num_states * spaces.num_actions];
    let mut rewards = Vec::with_capacity(joint.n_agents());
    for (&x, &u) in joint.states.iter().zip(&actions) {
        let r = *reward_cells[x * spaces.num_actions + u]
            .get_or_insert_with(|| model.reward(x, u, &state_dist, &action_dist));
        rewards.push(r);
    }

    let mut pmf_cells: Vec<Option<Distribution>> =
        vec![None; spaces.num_states * spaces.num_actions];
    let mut next = Vec::with_capacity(joint.n_agents());
    for (&x, &u) in joint.states.iter().zip(&actions) {
        let pmf = pmf_cells[x * spaces.num_actions + u]
            .get_or_insert_with(|| model.transition(x, u, &state_dist, &action_dist));
        if pmf.len() != spaces.num_states {
            return Err(Error::LengthMismatch {
                left: pmf.len(),
                right: spaces.num_states,
            });
        }
        next.push(pmf.sample(rng));
    }

    Ok(StepOutcome {
        next: JointState { states: next },
        actions,
        state_dist,
        action_dist,
        rewards,
    })
}

/// One recorded step of a rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub state_dist: Distribution,
    pub action_dist: Distribution,
    pub rewards: Vec<f64>,
}

/// Full trace of one episode: per-step population data plus the discounted
/// population-average return, with the seed and observation mode recorded
/// for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub steps: Vec<StepRecord>,
    pub discounted_return: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub seed: u64,
    pub mode: String,
}

impl RolloutRecord {
    /// Recomputes the record's internal quantities and checks consistency.
    pub fn validate(&self, num_states: usize, num_actions: usize) -> Result<()> {
        let mut total = 0.0;
        let mut discount = 1.0;
        for step in &self.steps {
            let mu = empirical_distribution(&step.states, num_states)?;
            if mu != step.state_dist {
                return Err(Error::InvalidParameter(
                    "stored state distribution does not match states".into(),
                ));
            }
            let nu = empirical_distribution(&step.actions, num_actions)?;
            if nu != step.action_dist {
                return Err(Error::InvalidParameter(
                    "stored action distribution does not match actions".into(),
                ));
            }
            let avg = step.rewards.iter().sum::<f64>() / step.rewards.len() as f64;
            total += discount * avg;
            discount *= self.gamma;
        }
        if (total - self.discounted_return).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "stored return {} does not match recomputation {total}",
                self.discounted_return
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[allow(clippy::too_many_arguments)]
fn run_episode<R: Rng>(
    joint0: &JointState,
    seq: &PolicySequence,
    mode: &ExecutionMode,
    model: &dyn MeanFieldModel,
    gamma: f64,
    horizon: usize,
    rng: &mut R,
    mut record: Option<&mut Vec<StepRecord>>,
) -> Result<f64> {
    let mut joint = joint0.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for t in 0..=horizon {
        let out = step(&joint, seq.policy_at(t), mode, t, model, rng)?;
        let avg = out.rewards.iter().sum::<f64>() / out.rewards.len() as f64;
        total += discount * avg;
        discount *= gamma;
        if let Some(steps) = record.as_deref_mut() {
            steps.push(StepRecord {
                states: joint.states.clone(),
                actions: out.actions,
                state_dist: out.state_dist,
                action_dist: out.action_dist,
                rewards: out.rewards,
            });
        }
        joint = out.next;
    }
    Ok(total)
}

/// Simulates one episode over steps `t = 0..=horizon` and records the full
/// trace. Deterministic given `seed`.
pub fn rollout(
    joint0: &JointState,
    seq: &PolicySequence,
    mode: &ExecutionMode,
    model: &dyn MeanFieldModel,
    gamma: f64,
    horizon: usize,
    seed: u64,
) -> Result<RolloutRecord> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    if let ExecutionMode::Local(flow) = mode {
        if flow.horizon < horizon {
            return Err(Error::FlowHorizonExceeded {
                t: horizon,
                horizon: flow.horizon,
            });
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut steps = Vec::with_capacity(horizon + 1);
    let total = run_episode(
        joint0,
        seq,
        mode,
        model,
        gamma,
        horizon,
        &mut rng,
        Some(&mut steps),
    )?;
    Ok(RolloutRecord {
        steps,
        discounted_return: total,
        gamma,
        horizon,
        seed,
        mode: mode.label().to_string(),
    })
}

/// Where Monte-Carlo episodes start.
#[derive(Clone, Debug)]
pub enum ValueStart<'a> {
    /// A fixed joint state shared by every episode.
    Joint(&'a JointState),
    /// Rebuilt per episode from `mu0` with the given strategy (a fresh
    /// derived seed per episode; deterministic strategies yield the same
    /// joint state every time).
    FromDistribution {
        mu0: &'a Distribution,
        n_agents: usize,
        strategy: InitStrategy,
    },
}

/// Monte-Carlo estimate of the discounted population-average value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub episodes: usize,
    /// Set when a standard error could not be estimated (one episode).
    pub degenerate: bool,
}

/// Runs `episodes` independent seeded episodes and returns the mean and
/// standard error of their discounted population-average returns.
/// Episode `e` uses seeds derived from `(base_seed, e)`, so results do not
/// depend on thread count or scheduling.
#[allow(clippy::too_many_arguments)]
pub fn estimate_value(
    start: &ValueStart<'_>,
    seq: &PolicySequence,
    mode: &ExecutionMode,
    model: &dyn MeanFieldModel,
    gamma: f64,
    horizon: usize,
    episodes: usize,
    base_seed: u64,
) -> Result<ValueEstimate> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("episodes must be >= 1".into()));
    }
    let returns: Vec<f64> = (0..episodes)
        .into_par_iter()
        .map(|e| -> Result<f64> {
            let ep_seed = derive_seed(base_seed, e as u64);
            let joint0 = match start {
                ValueStart::Joint(j) => (*j).clone(),
                ValueStart::FromDistribution {
                    mu0,
                    n_agents,
                    strategy,
                } => initial_joint_state(mu0, *n_agents, *strategy, derive_seed(ep_seed, 0))?,
            };
            let mut rng = rng_from_seed(derive_seed(ep_seed, 1));
            run_episode(&joint0, seq, mode, model, gamma, horizon, &mut rng, None)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let degenerate = returns.len() == 1;
    let std_err = if degenerate {
        0.0
    } else {
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(ValueEstimate {
        mean,
        std_err,
        episodes: returns.len(),
        degenerate,
    })
}

/// Branch budget for the exhaustive oracle below.
pub const ORACLE_BRANCH_BUDGET: u64 = 1_000_000;

/// Exact expectation of the discounted population-average return, by
/// exhaustive enumeration of every action assignment and every transition
/// outcome with its probability (memoized over `(t, joint state)`; the
/// chain is Markov in the joint state once the observation mode fixes what
/// policies see at each step). Only for tiny instances: errors out once
/// [`ORACLE_BRANCH_BUDGET`] enumerated outcome branches are exceeded.
///
/// This is the reference the Monte-Carlo estimator is validated against;
/// it shares no code with the stochastic rollout path.
pub fn exact_small_system_value(
    joint0: &JointState,
    seq: &PolicySequence,
    mode: &ExecutionMode,
    model: &dyn MeanFieldModel,
    gamma: f64,
    horizon: usize,
) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDiscount(gamma));
    }
    let spaces = model.spaces();
    let n = joint0.n_agents();
    // Joint states are encoded in mixed radix |X|^N for memoization.
    let mut code_cap: u64 = 1;
    for _ in 0..n {
        code_cap = code_cap
            .checked_mul(spaces.num_states as u64)
            .ok_or(Error::OracleTooLarge {
                budget: ORACLE_BRANCH_BUDGET,
            })?;
        if code_cap > ORACLE_BRANCH_BUDGET {
            return Err(Error::OracleTooLarge {
                budget: ORACLE_BRANCH_BUDGET,
            });
        }
    }

    struct Ctx<'a> {
        seq: &'a PolicySequence,
        mode: &'a ExecutionMode,
        model: &'a dyn MeanFieldModel,
        gamma: f64,
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        branches: u64,
        memo: HashMap<(usize, u64), f64>,
    }

    fn encode(states: &[usize], num_states: usize) -> u64 {
        states
            .iter()
            .fold(0u64, |acc, &x| acc * num_states as u64 + x as u64)
    }

    /// Advances a mixed-radix counter; returns false after wrapping to zero.
    fn next_assignment(digits: &mut [usize], radix: usize) -> bool {
        for d in digits.iter_mut() {
            *d += 1;
            if *d < radix {
                return true;
            }
            *d = 0;
        }
        false
    }

    fn expected_return(ctx: &mut Ctx<'_>, t: usize, states: &[usize]) -> Result<f64> {
        let code = encode(states, ctx.num_states);
        if let Some(&v) = ctx.memo.get(&(t, code)) {
            return Ok(v);
        }
        let mu = empirical_distribution(states, ctx.num_states)?;
        let observed: &Distribution = match ctx.mode {
            ExecutionMode::Global => &mu,
            ExecutionMode::Local(flow) => {
                flow.state_dist(t).ok_or(Error::FlowHorizonExceeded {
                    t,
                    horizon: flow.horizon,
                })?
            }
        };
        let policy = ctx.seq.policy_at(t);
        let rows: Vec<Distribution> = {
            let mut cache: Vec<Option<Distribution>> = vec![None; ctx.num_states];
            states
                .iter()
                .map(|&x| {
                    cache[x]
                        .get_or_insert_with(|| policy.decide(x, observed))
                        .clone()
                })
                .collect()
        };

        let n = states.len();
        let mut value = 0.0;
        let mut actions = vec![0usize; n];
        loop {
            let p_actions: f64 = actions
                .iter()
                .enumerate()
                .map(|(i, &u)| rows[i].weight(u))
                .product();
            if p_actions > 0.0 {
                ctx.branches += 1;
                if ctx.branches > ORACLE_BRANCH_BUDGET {
                    return Err(Error::OracleTooLarge {
                        budget: ORACLE_BRANCH_BUDGET,
                    });
                }
                let nu = empirical_distribution(&actions, ctx.num_actions)?;
                let avg_reward: f64 = states
                    .iter()
                    .zip(&actions)
                    .map(|(&x, &u)| ctx.model.reward(x, u, &mu, &nu))
                    .sum::<f64>()
                    / n as f64;

                if t == ctx.horizon {
                    value += p_actions * avg_reward;
                } else {
                    let pmfs: Vec<Distribution> = states
                        .iter()
                        .zip(&actions)
                        .map(|(&x, &u)| ctx.model.transition(x, u, &mu, &nu))
                        .collect();
                    let mut future = 0.0;
                    let mut next = vec![0usize; n];
                    loop {
                        let p_next: f64 = next
                            .iter()
                            .enumerate()
                            .map(|(i, &x)| pmfs[i].weight(x))
                            .product();
                        if p_next > 0.0 {
                            ctx.branches += 1;
                            if ctx.branches > ORACLE_BRANCH_BUDGET {
                                return Err(Error::OracleTooLarge {
                                    budget: ORACLE_BRANCH_BUDGET,
                                });
                            }
                            future += p_next * expected_return(ctx, t + 1, &next)?;
                        }
                        if !next_assignment(&mut next, ctx.num_states) {
                            break;
                        }
                    }
                    value += p_actions * (avg_reward + ctx.gamma * future);
                }
            }
            if !next_assignment(&mut actions, ctx.num_actions) {
                break;
            }
        }
        ctx.memo.insert((t, code), value);
        Ok(value)
    }

    let mut ctx = Ctx {
        seq,
        mode,
        model,
        gamma,
        horizon,
        num_states: spaces.num_states,
        num_actions: spaces.num_actions,
        branches: 0,
        memo: HashMap::new(),
    };
    expected_return(&mut ctx, 0, &joint0.states)
}
