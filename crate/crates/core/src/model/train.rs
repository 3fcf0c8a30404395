//! Mini-batch fine-tuning and masked-label prediction.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::log_softmax;
use super::{AdamW, AdamWConfig, Batch, Dropout, Model, Scalar};
use crate::error::{Error, Result};
use crate::seed;
use crate::tokenizer::EncodedEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            batch_size: 16,
            epochs: 3,
            max_steps: None,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            ..AdamWConfig::default()
        }
    }
}

/// Progress report handed to the [`Trainer::fit`] callback after each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub optimizer: AdamW<T>,
    pub config: TrainConfig,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(config.optimizer(), &model.params);
        Ok(Trainer {
            model,
            optimizer,
            config,
        })
    }

    /// Continues from an existing optimizer state.
    pub fn resume(model: Model<T>, optimizer: AdamW<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut optimizer = optimizer;
        optimizer.config = config.optimizer();
        Ok(Trainer {
            model,
            optimizer,
            config,
        })
    }

    pub fn step(&mut self, entries: &[&EncodedEntry]) -> Result<f64> {
        let batch = Batch::from_entries(entries.iter().copied(), &self.model.config)?;
        let dropout = Dropout {
            rate: self.model.config.dropout,
            seed: self.config.seed,
            step: self.optimizer.step,
        };
        let (loss, grads) = self.model.loss_and_grad(&batch, Some(&dropout))?;
        self.optimizer.update(&mut self.model.params, &grads)?;
        Ok(loss)
    }

    /// Runs the configured epochs over `data`, reshuffled each epoch from
    /// (seed, epoch). The callback may stop training early.
    pub fn fit<F>(&mut self, data: &[EncodedEntry], mut on_step: F) -> Result<Vec<f64>>
    where
        F: FnMut(&Model<T>, StepInfo) -> ControlFlow<()>,
    {
        if data.is_empty() {
            return Err(Error::Data("no training examples".into()));
        }
        let mut losses = Vec::new();
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..self.config.epochs {
            let mut rng = seed::rng(&[self.config.seed, 0x6570_6f63_68, epoch as u64]);
            order.sort_unstable();
            order.shuffle(&mut rng);
            for chunk in order.chunks(self.config.batch_size) {
                if self.config.max_steps.is_some_and(|m| self.optimizer.step >= m) {
                    return Ok(losses);
                }
                let batch: Vec<&EncodedEntry> = chunk.iter().map(|&i| &data[i]).collect();
                let loss = self.step(&batch)?;
                losses.push(loss);
                let info = StepInfo {
                    step: self.optimizer.step,
                    epoch,
                    loss,
                };
                if on_step(&self.model, info).is_break() {
                    return Ok(losses);
                }
            }
        }
        Ok(losses)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Predicted token id.
    pub token: u32,
    /// Position of the prediction in the entry's candidate list; `None`
    /// when an unconstrained prediction fell outside it.
    pub candidate: Option<usize>,
    /// Constrained probabilities over the candidates, in candidate order.
    pub probs: Vec<f64>,
}

/// Index of the largest value; the lowest token id wins ties.
fn argmax_by_id(values: &[f64], ids: impl Fn(usize) -> u32) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        let better = values[i] > values[best] || (values[i] == values[best] && ids(i) < ids(best));
        if better {
            best = i;
        }
    }
    best
}

/// Predicts the masked label of every entry. With `constrained` the
/// argmax runs over the entry's candidates only, otherwise over the whole
/// vocabulary.
pub fn predict<T: Scalar>(
    model: &Model<T>,
    entries: &[EncodedEntry],
    constrained: bool,
    batch_size: usize,
) -> Result<Vec<Prediction>> {
    let batch_size = batch_size.max(1);
    let chunks: Vec<Result<Vec<Prediction>>> = entries
        .par_chunks(batch_size)
        .map(|chunk| {
            let batch = Batch::from_entries(chunk, &model.config)?;
            let hidden = model.mask_hidden(&batch);
            chunk
                .iter()
                .zip(hidden.rows())
                .map(|(e, h)| {
                    let logits = model.candidate_logits(h, &e.candidates);
                    let probs: Vec<f64> = log_softmax(&logits)?.into_iter().map(f64::exp).collect();
                    let (token, candidate) = if constrained {
                        let i = argmax_by_id(&logits, |i| e.candidates[i]);
                        (e.candidates[i], Some(i))
                    } else {
                        let full = model.vocab_logits(h);
                        if let Some(z) = full.iter().find(|z| !z.is_finite()) {
                            return Err(Error::Numeric(format!("non-finite logit {z}")));
                        }
                        let t = argmax_by_id(&full, |i| i as u32) as u32;
                        (t, e.candidates.iter().position(|&c| c == t))
                    };
                    Ok(Prediction {
                        token,
                        candidate,
                        probs,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(entries.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Fraction of entries whose constrained prediction equals the target.
pub fn accuracy<T: Scalar>(model: &Model<T>, entries: &[EncodedEntry]) -> Result<f64> {
    let preds = predict(model, entries, true, 32)?;
    let hits = preds
        .iter()
        .zip(entries)
        .filter(|(p, e)| p.candidate == Some(e.target))
        .count();
    Ok(hits as f64 / entries.len().max(1) as f64)
}
