use serde::{Deserialize, Serialize};

use super::{Params, SasRecModel};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// Adam moments, one slot per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Params<T>,
    pub v: Params<T>,
    pub steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &Params<T>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    /// One update. Gradients are checked first so a non-finite gradient leaves
    /// parameters and moments untouched.
    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>, learning_rate: f64) -> Result<()> {
        grads.check_finite().map_err(|e| match e {
            Error::NonFinite(name) => Error::NonFinite(format!("gradient of {name}")),
            other => other,
        })?;
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - beta2.powi(self.steps.min(i32::MAX as u64) as i32);
        let (b1, b2, e, lr) = (T::of(beta1), T::of(beta2), T::of(eps), T::of(learning_rate));
        let (c1, c2) = (T::of(c1), T::of(c2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + e);
            }
        }
        Ok(())
    }
}

/// Applies `grads` with Adam, re-zeroes the padding embedding and checks that
/// every parameter stayed finite.
pub fn backward_and_step<T: Scalar>(
    model: &mut SasRecModel<T>,
    grads: &Params<T>,
    optimizer: &mut Adam<T>,
    learning_rate: f64,
) -> Result<()> {
    optimizer.step(&mut model.params, grads, learning_rate)?;
    let d = model.config.embed_dim;
    model.params.item_emb[..d].iter_mut().for_each(|x| *x = T::zero());
    model.params.check_finite()
}
