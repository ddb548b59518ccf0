//! Synthetic environments and policies with analytically known regularity
//! constants, used by the randomized concentration checks and as fixtures
//! for the bound calculators.
//!
//! The environment family couples reward and transition to the population
//! linearly, which makes exact Lipschitz constants available by
//! construction instead of estimation:
//!
//! * reward: `r(x, u, μ, ν) = base[x,u] + a[x,u]·⟨w, μ⟩ + b[x,u]·⟨v, ν⟩`;
//! * transition: `P(x, u, μ, ν) = (1−g)·P₀[x,u] + g·P₁[x,u]` with
//!   `g = κ_μ·⟨w', μ⟩ + κ_ν·⟨v', ν⟩ ∈ [0, 1]`.

use rand::Rng;

use crate::dist::{Distribution, SpaceSpec};
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;
use crate::policy::Policy;
use crate::seed::rng_from_seed;

/// Tabular model with linear population coupling.
#[derive(Clone, Debug)]
pub struct LinearCouplingModel {
    spaces: SpaceSpec,
    base_reward: Vec<f64>,        // [x * U + u]
    reward_state_gain: Vec<f64>,  // [x * U + u]
    reward_action_gain: Vec<f64>, // [x * U + u]
    reward_state_weights: Vec<f64>,
    reward_action_weights: Vec<f64>,
    base_transition: Vec<Distribution>, // [x * U + u]
    alt_transition: Vec<Distribution>,  // [x * U + u]
    mix_state_gain: f64,
    mix_action_gain: f64,
    mix_state_weights: Vec<f64>,
    mix_action_weights: Vec<f64>,
}

impl LinearCouplingModel {
    /// Random instance. `coupling` in `[0, 1]` scales how strongly the
    /// population distributions enter reward and transition (0 decouples
    /// them entirely).
    pub fn random(spaces: SpaceSpec, coupling: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&coupling) {
            return Err(Error::InvalidParameter(
                "coupling must lie in [0, 1]".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let cells = spaces.num_states * spaces.num_actions;
        let sym = |rng: &mut rand_chacha::ChaCha8Rng| rng.random::<f64>() * 2.0 - 1.0;

        let base_reward: Vec<f64> = (0..cells).map(|_| sym(&mut rng)).collect();
        let reward_state_gain: Vec<f64> =
            (0..cells).map(|_| sym(&mut rng) * coupling).collect();
        let reward_action_gain: Vec<f64> =
            (0..cells).map(|_| sym(&mut rng) * coupling).collect();
        let reward_state_weights: Vec<f64> =
            (0..spaces.num_states).map(|_| sym(&mut rng)).collect();
        let reward_action_weights: Vec<f64> =
            (0..spaces.num_actions).map(|_| sym(&mut rng)).collect();

        let mut base_transition = Vec::with_capacity(cells);
        let mut alt_transition = Vec::with_capacity(cells);
        for _ in 0..cells {
            base_transition.push(Distribution::random_simplex(spaces.num_states, &mut rng)?);
            alt_transition.push(Distribution::random_simplex(spaces.num_states, &mut rng)?);
        }
        // Split at most `coupling` total gain between the two mixing terms.
        let split = rng.random::<f64>();
        let mix_state_gain = coupling * split;
        let mix_action_gain = coupling * (1.0 - split);
        let mix_state_weights: Vec<f64> =
            (0..spaces.num_states).map(|_| rng.random::<f64>()).collect();
        let mix_action_weights: Vec<f64> =
            (0..spaces.num_actions).map(|_| rng.random::<f64>()).collect();

        Ok(LinearCouplingModel {
            spaces,
            base_reward,
            reward_state_gain,
            reward_action_gain,
            reward_state_weights,
            reward_action_weights,
            base_transition,
            alt_transition,
            mix_state_gain,
            mix_action_gain,
            mix_state_weights,
            mix_action_weights,
        })
    }

    /// Decoupled instance with identity transitions: every state is
    /// absorbing and the reward ignores the population entirely.
    pub fn identity(spaces: SpaceSpec, seed: u64) -> Result<Self> {
        let mut model = Self::random(spaces, 0.0, seed)?;
        let cells = spaces.num_states * spaces.num_actions;
        for x in 0..spaces.num_states {
            for u in 0..spaces.num_actions {
                let pm = Distribution::point_mass(x, spaces.num_states)?;
                model.base_transition[x * spaces.num_actions + u] = pm.clone();
                model.alt_transition[x * spaces.num_actions + u] = pm;
            }
        }
        debug_assert_eq!(model.base_transition.len(), cells);
        Ok(model)
    }

    fn cell(&self, x: usize, u: usize) -> usize {
        x * self.spaces.num_actions + u
    }

    fn mix_level(&self, mu: &Distribution, nu: &Distribution) -> f64 {
        let gs: f64 = mu
            .weights()
            .iter()
            .zip(&self.mix_state_weights)
            .map(|(m, w)| m * w)
            .sum();
        let ga: f64 = nu
            .weights()
            .iter()
            .zip(&self.mix_action_weights)
            .map(|(n, v)| n * v)
            .sum();
        self.mix_state_gain * gs + self.mix_action_gain * ga
    }

    fn max_abs(values: &[f64]) -> f64 {
        values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl MeanFieldModel for LinearCouplingModel {
    fn spaces(&self) -> SpaceSpec {
        self.spaces
    }

    fn reward(&self, x: usize, u: usize, mu: &Distribution, nu: &Distribution) -> f64 {
        let c = self.cell(x, u);
        let smu: f64 = mu
            .weights()
            .iter()
            .zip(&self.reward_state_weights)
            .map(|(m, w)| m * w)
            .sum();
        let snu: f64 = nu
            .weights()
            .iter()
            .zip(&self.reward_action_weights)
            .map(|(n, v)| n * v)
            .sum();
        self.base_reward[c] + self.reward_state_gain[c] * smu + self.reward_action_gain[c] * snu
    }

    fn transition(&self, x: usize, u: usize, mu: &Distribution, nu: &Distribution) -> Distribution {
        let c = self.cell(x, u);
        let g = self.mix_level(mu, nu);
        let base = &self.base_transition[c];
        let alt = &self.alt_transition[c];
        let weights = base
            .weights()
            .iter()
            .zip(alt.weights())
            .map(|(b, a)| (1.0 - g) * b + g * a)
            .collect();
        Distribution::new(weights).expect("convex combination of simplex points")
    }

    fn reward_bound(&self) -> f64 {
        // |⟨w, μ⟩| ≤ max|w| on the simplex.
        Self::max_abs(&self.base_reward)
            + Self::max_abs(&self.reward_state_gain) * Self::max_abs(&self.reward_state_weights)
            + Self::max_abs(&self.reward_action_gain) * Self::max_abs(&self.reward_action_weights)
    }

    fn reward_lipschitz(&self) -> f64 {
        let lr_mu =
            Self::max_abs(&self.reward_state_gain) * Self::max_abs(&self.reward_state_weights);
        let lr_nu =
            Self::max_abs(&self.reward_action_gain) * Self::max_abs(&self.reward_action_weights);
        lr_mu.max(lr_nu)
    }

    fn transition_lipschitz(&self) -> f64 {
        let spread = self
            .base_transition
            .iter()
            .zip(&self.alt_transition)
            .map(|(b, a)| b.l1_distance(a).expect("same length"))
            .fold(0.0f64, f64::max);
        let lp_mu = self.mix_state_gain * Self::max_abs(&self.mix_state_weights);
        let lp_nu = self.mix_action_gain * Self::max_abs(&self.mix_action_weights);
        spread * lp_mu.max(lp_nu)
    }

    fn action_dist_free(&self) -> bool {
        self.mix_action_gain == 0.0
            && self.reward_action_gain.iter().all(|&g| g == 0.0)
    }
}

/// Policy that blends a per-state table with a distribution-dependent
/// mixture: `decide(x, μ) = (1−κ)·table[x] + κ·Σ_x' μ(x')·col[x']`.
///
/// Each `col[x']` is itself an action distribution, so the output is a
/// convex combination of simplex points, and the Lipschitz constant in the
/// distribution argument is exactly `κ`.
#[derive(Clone, Debug)]
pub struct LinearMixPolicy {
    table: Vec<Distribution>,
    mix_columns: Vec<Distribution>,
    kappa: f64,
}

impl LinearMixPolicy {
    pub fn new(
        table: Vec<Distribution>,
        mix_columns: Vec<Distribution>,
        kappa: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidParameter("kappa must lie in [0, 1]".into()));
        }
        if table.is_empty() || mix_columns.len() != table.len() {
            return Err(Error::LengthMismatch {
                left: mix_columns.len(),
                right: table.len(),
            });
        }
        Ok(LinearMixPolicy {
            table,
            mix_columns,
            kappa,
        })
    }

    pub fn random(spaces: SpaceSpec, kappa: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let table = (0..spaces.num_states)
            .map(|_| Distribution::random_simplex(spaces.num_actions, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mix_columns = (0..spaces.num_states)
            .map(|_| Distribution::random_simplex(spaces.num_actions, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(table, mix_columns, kappa)
    }
}

impl Policy for LinearMixPolicy {
    fn decide(&self, state: usize, state_dist: &Distribution) -> Distribution {
        let num_actions = self.table[state].len();
        let mut weights = vec![0.0; num_actions];
        for (u, w) in self.table[state].support() {
            weights[u] += (1.0 - self.kappa) * w;
        }
        for (x, mass) in state_dist.support() {
            for (u, w) in self.mix_columns[x].support() {
                weights[u] += self.kappa * mass * w;
            }
        }
        Distribution::new(weights).expect("convex combination of simplex points")
    }

    fn lipschitz_bound(&self) -> f64 {
        self.kappa
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_model_contract;
    use crate::policy::policy_sup_distance;

    #[test]
    fn random_model_honors_contract() {
        for seed in 0..5 {
            let spaces = SpaceSpec::new(3, 2).unwrap();
            let model = LinearCouplingModel::random(spaces, 0.7, seed).unwrap();
            check_model_contract(&model, 200, seed + 100).unwrap();
        }
    }

    #[test]
    fn identity_model_is_decoupled_and_absorbing() {
        let spaces = SpaceSpec::new(3, 2).unwrap();
        let model = LinearCouplingModel::identity(spaces, 1).unwrap();
        assert_eq!(model.transition_lipschitz(), 0.0);
        assert_eq!(model.reward_lipschitz(), 0.0);
        assert!(model.action_dist_free());
        let mu = Distribution::uniform(3).unwrap();
        let nu = Distribution::uniform(2).unwrap();
        for x in 0..3 {
            let pmf = model.transition(x, 0, &mu, &nu);
            assert_eq!(pmf.weight(x), 1.0);
        }
    }

    #[test]
    fn reward_stays_within_declared_bound_and_lipschitz() {
        let spaces = SpaceSpec::new(4, 3).unwrap();
        let model = LinearCouplingModel::random(spaces, 1.0, 9).unwrap();
        let mut rng = rng_from_seed(77);
        for _ in 0..500 {
            let x = rng.random_range(0..4);
            let u = rng.random_range(0..3);
            let mu1 = Distribution::random_simplex(4, &mut rng).unwrap();
            let mu2 = Distribution::random_simplex(4, &mut rng).unwrap();
            let nu1 = Distribution::random_simplex(3, &mut rng).unwrap();
            let nu2 = Distribution::random_simplex(3, &mut rng).unwrap();
            let r1 = model.reward(x, u, &mu1, &nu1);
            let r2 = model.reward(x, u, &mu2, &nu2);
            assert!(r1.abs() <= model.reward_bound() + 1e-12);
            let denom =
                mu1.l1_distance(&mu2).unwrap() + nu1.l1_distance(&nu2).unwrap();
            assert!((r1 - r2).abs() <= model.reward_lipschitz() * denom + 1e-12);

            let p1 = model.transition(x, u, &mu1, &nu1);
            let p2 = model.transition(x, u, &mu2, &nu2);
            assert!(
                p1.l1_distance(&p2).unwrap() <= model.transition_lipschitz() * denom + 1e-12
            );
        }
    }

    #[test]
    fn mix_policy_lipschitz_is_exact_kappa() {
        let spaces = SpaceSpec::new(4, 3).unwrap();
        let policy = LinearMixPolicy::random(spaces, 0.6, 3).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..500 {
            let mu1 = Distribution::random_simplex(4, &mut rng).unwrap();
            let mu2 = Distribution::random_simplex(4, &mut rng).unwrap();
            let gap = policy_sup_distance(&policy, &policy, &mu1, &mu2, spaces).unwrap();
            assert!(gap <= policy.lipschitz_bound() * mu1.l1_distance(&mu2).unwrap() + 1e-12);
        }
    }
}
