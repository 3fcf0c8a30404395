//! Compact pre-LayerNorm transformer encoder with a tied masked-token head,
//! trained from scratch with a hand-written backward pass.

mod attention;
mod checkpoint;
mod loss;
mod network;
mod ops;
mod optim;
mod params;
mod train;

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attention::{export_attention, AttentionExport, TokenAttention};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{constrained_log_probs, constrained_loss, log_sum_exp};
pub use network::{AttentionMaps, Batch, Dropout, Model, Sequence};
pub use optim::{AdamW, AdamWConfig};
pub use params::Params;
pub use train::{accuracy, predict, Prediction, StepInfo, TrainConfig, Trainer};

/// Floating-point element type of a model.
pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + 'static
{
    const DTYPE: &'static str;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ffn: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            max_len: 512,
            layers: 4,
            heads: 8,
            dim: 256,
            ffn: 1024,
            dropout: 0.1,
            layer_norm_eps: 1e-5,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.vocab_size < 5 {
            return bad(format!("vocabulary of {} tokens is too small", self.vocab_size));
        }
        if self.max_len == 0 || self.layers == 0 || self.heads == 0 || self.dim == 0 || self.ffn == 0 {
            return bad("max_len, layers, heads, dim and ffn must all be positive".into());
        }
        if self.dim % self.heads != 0 {
            return bad(format!("dim {} is not divisible by {} heads", self.dim, self.heads));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if !(self.layer_norm_eps > 0.0) || !(self.init_std >= 0.0) {
            return bad("layer_norm_eps must be positive and init_std non-negative".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}
