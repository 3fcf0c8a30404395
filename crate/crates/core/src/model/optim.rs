//! AdamW with decoupled weight decay; rank-1 tensors (biases, LayerNorm
//! gains) are not decayed.

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{Params, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub m: Params<T>,
    pub v: Params<T>,
    pub step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, params: &Params<T>) -> Self {
        AdamW {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    /// One update. Fails without touching `params` if the gradient is not
    /// finite.
    pub fn update(&mut self, params: &mut Params<T>, grads: &Params<T>) -> Result<()> {
        let norm = grads.squared_norm().sqrt();
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("gradient norm is {norm}")));
        }
        let clip = match self.config.clip_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let step_size = T::of(c.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(c.eps);
        let clip = T::of(clip);
        for i in 0..params.len() {
            let decay = if params.tensors[i].ndim() >= 2 {
                T::of(1.0 - c.lr * c.weight_decay)
            } else {
                T::one()
            };
            Zip::from(&mut params.tensors[i])
                .and(&grads.tensors[i])
                .and(&mut self.m.tensors[i])
                .and(&mut self.v.tensors[i])
                .for_each(|w, &g, m, v| {
                    let g = g * clip;
                    *m = b1 * *m + one_b1 * g;
                    *v = b2 * *v + one_b2 * g * g;
                    *w = *w * decay - step_size * *m / ((*v * inv_bc2).sqrt() + eps);
                });
        }
        Ok(())
    }
}
