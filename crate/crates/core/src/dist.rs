//! Finite index spaces and probability distributions over them.
//!
//! States and actions are dense integer indices `0..n`; a [`Distribution`]
//! is a dense weight vector on such an index set. These carry the empirical
//! and limiting population distributions used everywhere else in the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes of the per-agent state and action spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub num_states: usize,
    pub num_actions: usize,
}

impl SpaceSpec {
    pub fn new(num_states: usize, num_actions: usize) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidParameter(
                "state and action spaces must be nonempty".into(),
            ));
        }
        Ok(SpaceSpec {
            num_states,
            num_actions,
        })
    }
}

/// Accepted deviation of a weight sum from 1 without renormalization.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Largest deviation that is silently renormalized away; anything worse
/// is rejected. Keeps floating accumulation along long flows from
/// cascading into rejections.
pub const RENORM_TOL: f64 = 1e-6;

/// A probability distribution over a finite index set (states or actions).
///
/// Invariants: every weight is finite and `>= 0`, and the weights sum to 1
/// within [`SIMPLEX_TOL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Validates and normalizes a weight vector. Sums within
    /// [`SIMPLEX_TOL`] of 1 are kept bit-for-bit; sums within
    /// [`RENORM_TOL`] are renormalized; anything else is rejected.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        for (k, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "weight at index {k} is not finite"
                )));
            }
            if w < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "negative weight {w} at index {k}"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        let dev = (sum - 1.0).abs();
        if dev <= SIMPLEX_TOL {
            Ok(Distribution { weights })
        } else if dev <= RENORM_TOL {
            let weights = weights.into_iter().map(|w| w / sum).collect();
            Ok(Distribution { weights })
        } else {
            Err(Error::InvalidDistribution(format!(
                "weights sum to {sum}, deviation {dev:e} exceeds tolerance"
            )))
        }
    }

    /// Uniform distribution over `len` indices.
    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        Ok(Distribution {
            weights: vec![1.0 / len as f64; len],
        })
    }

    /// Point mass at `index`.
    pub fn point_mass(index: usize, len: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::IndexOutOfRange {
                index,
                domain: len,
            });
        }
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Ok(Distribution { weights })
    }

    /// Uniform sample from the simplex (exponential spacings, normalized).
    pub fn random_simplex<R: Rng>(len: usize, rng: &mut R) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidDistribution("empty weight vector".into()));
        }
        let raw: Vec<f64> = (0..len)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        Distribution::new(raw.into_iter().map(|e| e / sum).collect())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: never empty
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Indices with strictly positive mass.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
    }

    /// L1 distance `Σ_k |a_k − b_k|`; lies in `[0, 2]` on the simplex.
    pub fn l1_distance(&self, other: &Distribution) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// Draws one index via inverse-CDF walk over a single uniform variate.
    /// Never returns a zero-weight index.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (k, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = k;
                acc += w;
                if u < acc {
                    return k;
                }
            }
        }
        last_positive
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Distribution::new(weights)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Vec<f64> {
        d.weights
    }
}

/// Empirical distribution of a population: `weight(k) = #{items == k} / len`.
///
/// Every weight is an integer multiple of `1/len(items)`.
pub fn empirical_distribution(items: &[usize], domain_size: usize) -> Result<Distribution> {
    if items.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut counts = vec![0usize; domain_size];
    for &item in items {
        if item >= domain_size {
            return Err(Error::IndexOutOfRange {
                index: item,
                domain: domain_size,
            });
        }
        counts[item] += 1;
    }
    let n = items.len() as f64;
    Distribution::new(counts.into_iter().map(|c| c as f64 / n).collect())
}
