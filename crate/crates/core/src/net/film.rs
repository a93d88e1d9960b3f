//! Spatially varying feature-wise linear modulation.
//!
//! A generator maps a per-token conditioning vector (one-hot labels) to a
//! scale map γ and a shift map β of the same shape as the features, and the
//! modulated output is `γ ⊙ z + β` at every token.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::layers::{relu, relu_backward, Dense};
use super::params::ParamStore;

#[derive(Debug, Error, PartialEq)]
pub enum FilmError {
    #[error("shape mismatch: features {features} values, gamma {gamma}, beta {beta}")]
    ShapeMismatch {
        features: usize,
        gamma: usize,
        beta: usize,
    },
}

/// `γ ⊙ z + β`, elementwise.
pub fn film(z: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>, FilmError> {
    if gamma.len() != z.len() || beta.len() != z.len() {
        return Err(FilmError::ShapeMismatch {
            features: z.len(),
            gamma: gamma.len(),
            beta: beta.len(),
        });
    }
    Ok(z.iter()
        .zip(gamma)
        .zip(beta)
        .map(|((z, g), b)| g * z + b)
        .collect())
}

/// Gradients of FiLM: (dz, dγ, dβ).
pub fn film_backward(z: &[f64], gamma: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dz = dout.iter().zip(gamma).map(|(d, g)| d * g).collect();
    let dgamma = dout.iter().zip(z).map(|(d, z)| d * z).collect();
    (dz, dgamma, dout.to_vec())
}

/// Two stacks of 1x1 layers (hidden ReLU) producing γ and β from the
/// conditioning map.
#[derive(Clone, Debug, PartialEq)]
pub struct FilmGenerator {
    pub c_in: usize,
    pub d: usize,
    pub gamma1: Dense,
    pub gamma2: Dense,
    pub beta1: Dense,
    pub beta2: Dense,
}

#[derive(Clone, Debug)]
pub struct FilmCache {
    cond: Vec<f64>,
    gamma_hidden: Vec<f64>,
    beta_hidden: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FilmGenerator {
    /// γ starts around 1 and β around 0 so the block begins near identity.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        d: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            c_in,
            d,
            gamma1: Dense::new(store, &format!("{name}.gamma1"), c_in, d, rng),
            gamma2: Dense::with_bias(store, &format!("{name}.gamma2"), d, d, 1.0, rng),
            beta1: Dense::new(store, &format!("{name}.beta1"), c_in, d, rng),
            beta2: Dense::new(store, &format!("{name}.beta2"), d, d, rng),
        }
    }

    /// Generates γ and β for a `n x c_in` conditioning map.
    pub fn generate(&self, p: &[f64], cond: &[f64]) -> FilmCache {
        let gamma_hidden = relu(&self.gamma1.forward(p, cond));
        let beta_hidden = relu(&self.beta1.forward(p, cond));
        FilmCache {
            cond: cond.to_vec(),
            gamma: self.gamma2.forward(p, &gamma_hidden),
            beta: self.beta2.forward(p, &beta_hidden),
            gamma_hidden,
            beta_hidden,
        }
    }

    /// Modulates `z` and returns the output plus the generator cache.
    pub fn forward(
        &self,
        p: &[f64],
        z: &[f64],
        cond: &[f64],
    ) -> Result<(Vec<f64>, FilmCache), FilmError> {
        let cache = self.generate(p, cond);
        let out = film(z, &cache.gamma, &cache.beta)?;
        Ok((out, cache))
    }

    /// Accumulates generator gradients and returns dL/dz. No gradient is
    /// propagated into the conditioning input, which is a constant label map.
    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        z: &[f64],
        c: &FilmCache,
        dout: &[f64],
    ) -> Vec<f64> {
        let (dz, dgamma, dbeta) = film_backward(z, &c.gamma, dout);
        let dgh = self.gamma2.backward(p, g, &c.gamma_hidden, &dgamma);
        self.gamma1
            .backward(p, g, &c.cond, &relu_backward(&c.gamma_hidden, &dgh));
        let dbh = self.beta2.backward(p, g, &c.beta_hidden, &dbeta);
        self.beta1
            .backward(p, g, &c.cond, &relu_backward(&c.beta_hidden, &dbh));
        dz
    }
}
