//! Softmax policy backed by a one-hidden-layer network, with exact
//! gradients of the action log-probabilities computed by hand.
//!
//! Features for `(x, μ)` are the one-hot encoding of `x` concatenated with
//! the weights of `μ` (dimension `2·|X|`). The network is
//!
//! ```text
//! h      = tanh(W1·φ + b1)        (hidden width H)
//! logits = W2·h + b2              (one logit per action)
//! π(u)   = softmax(logits)(u)
//! ```
//!
//! Parameters are flattened in the order `W1, b1, W2, b2`; gradients use
//! the same layout.

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, SpaceSpec};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::seed::rng_from_seed;
use rand::Rng;

/// Floor applied inside the log only, never to sampling: keeps `log π`
/// finite when a softmax output underflows.
const LOG_PROB_FLOOR: f64 = 1e-12;

fn derive_head_seed(seed: u64) -> u64 {
    crate::seed::derive_seed(seed, 0x6865_6164) // "head"
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricPolicy {
    spaces: SpaceSpec,
    hidden: usize,
    w1: Vec<f64>, // hidden × feat, row-major
    b1: Vec<f64>, // hidden
    w2: Vec<f64>, // actions × hidden, row-major
    b2: Vec<f64>, // actions
}

impl ParametricPolicy {
    /// Fresh policy: hidden weights drawn symmetric-uniform scaled by
    /// `1/√fan_in`, zero biases, and a zero output head. The zero head
    /// makes the initial policy exactly uniform over actions, so training
    /// runs start value-neutral instead of inheriting a random head's
    /// value offset.
    pub fn new(spaces: SpaceSpec, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidParameter("hidden width must be >= 1".into()));
        }
        let feat = 2 * spaces.num_states;
        let mut rng = rng_from_seed(seed);
        let scale1 = 1.0 / (feat as f64).sqrt();
        let w1 = (0..hidden * feat)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale1)
            .collect();
        Ok(ParametricPolicy {
            spaces,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2: vec![0.0; spaces.num_actions * hidden],
            b2: vec![0.0; spaces.num_actions],
        })
    }

    /// Fresh policy with *every* weight drawn symmetric-uniform scaled by
    /// `1/√fan_in` (no zero head); biases zero.
    pub fn new_random_head(spaces: SpaceSpec, hidden: usize, seed: u64) -> Result<Self> {
        let mut policy = Self::new(spaces, hidden, seed)?;
        let mut rng = rng_from_seed(derive_head_seed(seed));
        let scale2 = 1.0 / (hidden as f64).sqrt();
        for w in policy.w2.iter_mut() {
            *w = (rng.random::<f64>() * 2.0 - 1.0) * scale2;
        }
        Ok(policy)
    }

    pub fn spaces(&self) -> SpaceSpec {
        self.spaces
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    fn feat_dim(&self) -> usize {
        2 * self.spaces.num_states
    }

    /// Total parameter count `d`.
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Flattened parameter vector in layout order.
    pub fn params(&self) -> Vec<f64> {
        let mut phi = Vec::with_capacity(self.param_count());
        phi.extend_from_slice(&self.w1);
        phi.extend_from_slice(&self.b1);
        phi.extend_from_slice(&self.w2);
        phi.extend_from_slice(&self.b2);
        phi
    }

    /// Replaces all parameters from a flattened vector.
    pub fn set_params(&mut self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                left: phi.len(),
                right: self.param_count(),
            });
        }
        let (a, rest) = phi.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
        Ok(())
    }

    /// In-place update `Φ ← Φ + scale·direction`.
    pub fn add_scaled(&mut self, direction: &[f64], scale: f64) -> Result<()> {
        if direction.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                left: direction.len(),
                right: self.param_count(),
            });
        }
        let mut offset = 0;
        for slice in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            for v in slice.iter_mut() {
                *v += scale * direction[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    /// Rebuilds a policy from its serialized pieces.
    pub fn from_parts(
        spaces: SpaceSpec,
        hidden: usize,
        params: &[f64],
    ) -> Result<Self> {
        let mut policy = ParametricPolicy {
            spaces,
            hidden,
            w1: vec![0.0; hidden * 2 * spaces.num_states],
            b1: vec![0.0; hidden],
            w2: vec![0.0; spaces.num_actions * hidden],
            b2: vec![0.0; spaces.num_actions],
        };
        policy.set_params(params)?;
        Ok(policy)
    }

    fn features(&self, state: usize, mu: &Distribution) -> Vec<f64> {
        let nx = self.spaces.num_states;
        let mut phi = vec![0.0; 2 * nx];
        phi[state] = 1.0;
        phi[nx..].copy_from_slice(mu.weights());
        phi
    }

    /// Forward pass returning `(probs, hidden activations, features)`.
    fn forward(&self, state: usize, mu: &Distribution) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let feat = self.features(state, mu);
        let f = self.feat_dim();
        let mut h = vec![0.0; self.hidden];
        for i in 0..self.hidden {
            let mut z = self.b1[i];
            let row = &self.w1[i * f..(i + 1) * f];
            for (w, x) in row.iter().zip(&feat) {
                z += w * x;
            }
            h[i] = z.tanh();
        }
        let mut logits = vec![0.0; self.spaces.num_actions];
        for a in 0..self.spaces.num_actions {
            let mut z = self.b2[a];
            let row = &self.w2[a * self.hidden..(a + 1) * self.hidden];
            for (w, x) in row.iter().zip(&h) {
                z += w * x;
            }
            logits[a] = z;
        }
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
        (probs, h, feat)
    }

    /// Log-probability of `action` at `(state, mu)` and its exact gradient
    /// with respect to the flattened parameters.
    ///
    /// `∂logπ(u)/∂logits = e_u − π`, backpropagated through the output
    /// layer and the tanh hidden layer.
    pub fn log_prob_and_grad(
        &self,
        state: usize,
        mu: &Distribution,
        action: usize,
    ) -> (f64, Vec<f64>) {
        let (probs, h, feat) = self.forward(state, mu);
        let logp = probs[action].max(LOG_PROB_FLOOR).ln();

        let na = self.spaces.num_actions;
        let f = self.feat_dim();
        let mut d_logits = vec![0.0; na];
        for a in 0..na {
            d_logits[a] = if a == action { 1.0 - probs[a] } else { -probs[a] };
        }

        let mut grad = vec![0.0; self.param_count()];
        let (w1_len, b1_len, w2_len) = (self.w1.len(), self.b1.len(), self.w2.len());
        let (g_w1, rest) = grad.split_at_mut(w1_len);
        let (g_b1, rest) = rest.split_at_mut(b1_len);
        let (g_w2, g_b2) = rest.split_at_mut(w2_len);

        // Output layer: ∂/∂W2[a,i] = d_logits[a]·h[i], ∂/∂b2[a] = d_logits[a].
        for a in 0..na {
            let dl = d_logits[a];
            let row = &mut g_w2[a * self.hidden..(a + 1) * self.hidden];
            for (g, &hi) in row.iter_mut().zip(&h) {
                *g = dl * hi;
            }
            g_b2[a] = dl;
        }

        // Hidden layer: dh[i] = Σ_a d_logits[a]·W2[a,i], dz = dh·(1 − h²).
        for i in 0..self.hidden {
            let mut dh = 0.0;
            for a in 0..na {
                dh += d_logits[a] * self.w2[a * self.hidden + i];
            }
            let dz = dh * (1.0 - h[i] * h[i]);
            let row = &mut g_w1[i * f..(i + 1) * f];
            for (g, &x) in row.iter_mut().zip(&feat) {
                *g = dz * x;
            }
            g_b1[i] = dz;
        }

        (logp, grad)
    }

    /// Upper bound on the policy's Lipschitz constant in the distribution
    /// argument, as a product of layer sensitivities: the logits move at
    /// most `max|W1| · maxrow₁(W2)` per unit of L1 change in `μ` (tanh is
    /// 1-Lipschitz), and the softmax maps an `∞`-norm logit change to at
    /// most twice that in output L1. Reported, not enforced.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        let nx = self.spaces.num_states;
        let f = self.feat_dim();
        // Only the μ block of the features varies with the distribution.
        let mut w1_mu_max = 0.0f64;
        for i in 0..self.hidden {
            for j in nx..f {
                w1_mu_max = w1_mu_max.max(self.w1[i * f + j].abs());
            }
        }
        let mut w2_row_l1 = 0.0f64;
        for a in 0..self.spaces.num_actions {
            let row_sum: f64 = self.w2[a * self.hidden..(a + 1) * self.hidden]
                .iter()
                .map(|w| w.abs())
                .sum();
            w2_row_l1 = w2_row_l1.max(row_sum);
        }
        2.0 * w1_mu_max * w2_row_l1
    }
}

impl Policy for ParametricPolicy {
    fn decide(&self, state: usize, state_dist: &Distribution) -> Distribution {
        let (probs, _, _) = self.forward(state, state_dist);
        Distribution::new(probs).expect("softmax output is a distribution")
    }

    fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_upper_bound()
    }
}
