//! Benchmark environment: a market of collaborating firms with discrete
//! product-quality levels.
//!
//! Each firm sits at a quality level `x ∈ {0, …, Q−1}` and either idles
//! (action 0) or invests (action 1). Idling keeps the quality unchanged.
//! Investing improves it by `⌊χ·c⌋` where `χ ~ Uniform[0,1]` and
//! `c = (Q−1−x)·(1 − m/Q)` with `m` the population's mean quality: the
//! higher the market average, the harder further improvement becomes.
//! Per-step reward is `revenue·x − congestion·m − cost·u`.
//!
//! The mean-field dynamics need the exact pmf of the improvement, not just
//! a sampler, so [`firm_transition_pmf`] integrates the uniform density
//! over the cells of `χ ↦ ⌊χ·c⌋` in closed form.

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, SpaceSpec};
use crate::error::{Error, Result};
use crate::model::MeanFieldModel;

pub const IDLE: usize = 0;
pub const INVEST: usize = 1;

/// Parameters of the firm-quality environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirmConfig {
    /// Number of quality levels `Q` (states `0..Q`).
    pub quality_levels: usize,
    /// Revenue earned per quality unit.
    pub revenue_weight: f64,
    /// Penalty per unit of market mean quality.
    pub congestion_weight: f64,
    /// Cost of one investment step.
    pub investment_cost: f64,
}

impl FirmConfig {
    pub fn new(
        quality_levels: usize,
        revenue_weight: f64,
        congestion_weight: f64,
        investment_cost: f64,
    ) -> Result<Self> {
        if quality_levels < 2 {
            return Err(Error::InvalidParameter(
                "need at least two quality levels".into(),
            ));
        }
        if revenue_weight < 0.0 || congestion_weight < 0.0 || investment_cost < 0.0 {
            return Err(Error::InvalidParameter(
                "firm rate parameters must be nonnegative".into(),
            ));
        }
        Ok(FirmConfig {
            quality_levels,
            revenue_weight,
            congestion_weight,
            investment_cost,
        })
    }
}

/// Mean quality `Σ_x x·μ(x)` of a population distribution.
pub fn mean_quality(mu: &Distribution) -> f64 {
    mu.support().map(|(x, w)| x as f64 * w).sum()
}

/// Transition pmf for one firm. Idling is a point mass at the current
/// level; investing pushes `Uniform[0,1]` forward through `χ ↦ x + ⌊χ·c⌋`,
/// which puts mass `(min(k+1, c) − k)/c` on level `x + k` for
/// `k = 0 … ⌈c⌉−1`. A zero-length top cell (integer `c`) gets no mass, so
/// the support never leaves `0..Q`.
pub fn firm_transition_pmf(
    state: usize,
    action: usize,
    mu: &Distribution,
    cfg: &FirmConfig,
) -> Result<Distribution> {
    let q = cfg.quality_levels;
    if state >= q {
        return Err(Error::IndexOutOfRange {
            index: state,
            domain: q,
        });
    }
    if action > 1 {
        return Err(Error::IndexOutOfRange {
            index: action,
            domain: 2,
        });
    }
    if action == IDLE {
        return Distribution::point_mass(state, q);
    }
    let mean = mean_quality(mu);
    let c = (q - 1 - state) as f64 * (1.0 - mean / q as f64);
    if c <= 0.0 {
        return Distribution::point_mass(state, q);
    }
    let mut weights = vec![0.0; q];
    let cells = c.ceil() as usize;
    for k in 0..cells {
        let lo = k as f64;
        let hi = (k as f64 + 1.0).min(c);
        weights[state + k] = (hi - lo) / c;
    }
    Distribution::new(weights)
}

/// Reward for one firm: `revenue·x − congestion·mean(μ) − cost·u`.
pub fn firm_reward(state: usize, action: usize, mu: &Distribution, cfg: &FirmConfig) -> f64 {
    cfg.revenue_weight * state as f64 - cfg.congestion_weight * mean_quality(mu)
        - cfg.investment_cost * action as f64
}

/// The firm environment as a [`MeanFieldModel`]. Reward and transition
/// ignore the population action distribution, so the `action_dist_free`
/// regime applies.
///
/// Declared regularity constants (conservative, in L1):
/// * reward bound `revenue·(Q−1) + congestion·(Q−1) + cost`;
/// * reward Lipschitz `congestion·(Q−1)`, via `|m(μ₁) − m(μ₂)| ≤ (Q−1)·|μ₁−μ₂|₁`;
/// * transition Lipschitz `2·(Q−1)²/Q`, from the cell pmf's sensitivity of
///   at most `2` per unit of `c` and `|Δc| ≤ ((Q−1)/Q)·(Q−1)·|μ₁−μ₂|₁`.
#[derive(Clone, Debug)]
pub struct FirmModel {
    cfg: FirmConfig,
}

impl FirmModel {
    pub fn new(cfg: FirmConfig) -> Self {
        FirmModel { cfg }
    }

    pub fn config(&self) -> &FirmConfig {
        &self.cfg
    }
}

impl MeanFieldModel for FirmModel {
    fn spaces(&self) -> SpaceSpec {
        SpaceSpec::new(self.cfg.quality_levels, 2).expect("Q >= 2")
    }

    fn reward(&self, state: usize, action: usize, mu: &Distribution, _nu: &Distribution) -> f64 {
        firm_reward(state, action, mu, &self.cfg)
    }

    fn transition(
        &self,
        state: usize,
        action: usize,
        mu: &Distribution,
        _nu: &Distribution,
    ) -> Distribution {
        firm_transition_pmf(state, action, mu, &self.cfg).expect("valid firm indices")
    }

    fn reward_bound(&self) -> f64 {
        let top = (self.cfg.quality_levels - 1) as f64;
        self.cfg.revenue_weight * top + self.cfg.congestion_weight * top + self.cfg.investment_cost
    }

    fn reward_lipschitz(&self) -> f64 {
        self.cfg.congestion_weight * (self.cfg.quality_levels - 1) as f64
    }

    fn transition_lipschitz(&self) -> f64 {
        let top = (self.cfg.quality_levels - 1) as f64;
        2.0 * top * top / self.cfg.quality_levels as f64
    }

    fn action_dist_free(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{estimate_lipschitz, LipschitzTarget};
    use crate::dynamics::compute_flow;
    use crate::model::check_model_contract;
    use crate::policy::{PolicySequence, TabularPolicy};
    use std::sync::Arc;

    fn cfg(q: usize) -> FirmConfig {
        FirmConfig::new(q, 1.0, 0.5, 0.5).unwrap()
    }

    #[test]
    fn mean_quality_examples() {
        let q = 10;
        assert_eq!(mean_quality(&Distribution::point_mass(0, q).unwrap()), 0.0);
        assert_eq!(
            mean_quality(&Distribution::point_mass(q - 1, q).unwrap()),
            (q - 1) as f64
        );
        assert!((mean_quality(&Distribution::uniform(q).unwrap()) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn idle_keeps_state() {
        let c = cfg(6);
        let mu = Distribution::uniform(6).unwrap();
        for x in 0..6 {
            let pmf = firm_transition_pmf(x, IDLE, &mu, &c).unwrap();
            assert_eq!(pmf.weight(x), 1.0);
        }
    }

    #[test]
    fn top_quality_cannot_improve() {
        let c = cfg(6);
        let mu = Distribution::point_mass(0, 6).unwrap();
        let pmf = firm_transition_pmf(5, INVEST, &mu, &c).unwrap();
        assert_eq!(pmf.weight(5), 1.0);
    }

    #[test]
    fn invest_from_bottom_of_empty_market_is_uniform() {
        // Q = 10, x = 0, μ = δ_0 → c = 9 → mass 1/9 on levels 0..=8.
        let c = cfg(10);
        let mu = Distribution::point_mass(0, 10).unwrap();
        let pmf = firm_transition_pmf(0, INVEST, &mu, &c).unwrap();
        for k in 0..9 {
            assert!((pmf.weight(k) - 1.0 / 9.0).abs() < 1e-12);
        }
        assert_eq!(pmf.weight(9), 0.0);
    }

    #[test]
    fn pmf_sums_to_one_on_a_mean_grid() {
        let c = cfg(7);
        // Sweep the market mean by moving mass between the extremes.
        for i in 0..=20 {
            let w = i as f64 / 20.0;
            let mut weights = vec![0.0; 7];
            weights[0] = 1.0 - w;
            weights[6] = w;
            let mu = Distribution::new(weights).unwrap();
            for x in 0..7 {
                for u in [IDLE, INVEST] {
                    let pmf = firm_transition_pmf(x, u, &mu, &c).unwrap();
                    let sum: f64 = pmf.weights().iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn crowded_market_shrinks_improvement() {
        // For investing, a higher market mean pushes the next-state cdf up
        // (first-order stochastic dominance in reverse).
        let c = cfg(10);
        let low = Distribution::point_mass(1, 10).unwrap();
        let high = Distribution::point_mass(8, 10).unwrap();
        let pmf_low = firm_transition_pmf(0, INVEST, &low, &c).unwrap();
        let pmf_high = firm_transition_pmf(0, INVEST, &high, &c).unwrap();
        let mut cdf_low = 0.0;
        let mut cdf_high = 0.0;
        for k in 0..10 {
            cdf_low += pmf_low.weight(k);
            cdf_high += pmf_high.weight(k);
            assert!(cdf_high >= cdf_low - 1e-12);
        }
    }

    #[test]
    fn reward_examples() {
        let c = cfg(10);
        let delta0 = Distribution::point_mass(0, 10).unwrap();
        assert_eq!(firm_reward(0, IDLE, &delta0, &c), 0.0);
        assert_eq!(firm_reward(9, IDLE, &delta0, &c), 9.0);
        // x = 4, u = 1, mean = 2 → 4 − 1 − 0.5 = 2.5
        let mu2 = Distribution::point_mass(2, 10).unwrap();
        assert!((firm_reward(4, INVEST, &mu2, &c) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn model_contract_holds() {
        let model = FirmModel::new(cfg(5));
        check_model_contract(&model, 200, 11).unwrap();
        assert!(model.action_dist_free());
    }

    #[test]
    fn trivial_config_reward_bound() {
        let model = FirmModel::new(FirmConfig::new(2, 1.0, 0.0, 0.0).unwrap());
        assert_eq!(model.reward_bound(), 1.0);
    }

    #[test]
    fn sampled_lipschitz_never_exceeds_declared() {
        let model = FirmModel::new(cfg(8));
        let est = estimate_lipschitz(LipschitzTarget::Reward(&model), 10_000, 5).unwrap();
        // The worst-case pair (δ_0 vs δ_{Q−1}) yields congestion·(Q−1)/2;
        // the declared constant doubles that.
        let tight = model.config().congestion_weight * 7.0 / 2.0;
        assert!(est <= model.reward_lipschitz() + 1e-12);
        assert!(est > 0.5 * tight, "estimate {est} too far below {tight}");

        let est_p = estimate_lipschitz(LipschitzTarget::Transition(&model), 5_000, 6).unwrap();
        assert!(est_p <= model.transition_lipschitz() + 1e-12);
    }

    #[test]
    fn all_invest_flow_mean_is_nondecreasing() {
        let model = FirmModel::new(cfg(6));
        let invest = TabularPolicy::constant(INVEST, model.spaces()).unwrap();
        let seq = PolicySequence::stationary(Arc::new(invest));
        let mu0 = Distribution::point_mass(0, 6).unwrap();
        let flow = compute_flow(&mu0, &seq, &model, 30).unwrap();
        let mut prev = mean_quality(&flow.mu[0]);
        for mu_t in &flow.mu[1..] {
            let m = mean_quality(mu_t);
            assert!(m >= prev - 1e-12);
            prev = m;
        }
    }
}
