//! Final-layer attention of the mask position, averaged over heads.

use serde::{Deserialize, Serialize};

use super::{Model, Scalar};
use crate::error::{Error, Result};
use crate::tokenizer::{EncodedEntry, Vocab, PAD_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttention {
    pub position: usize,
    pub token: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    /// Zero-based index of the layer the scores come from (the last one).
    pub layer: usize,
    pub heads: usize,
    /// Position of the `<mask>` token whose attention row is reported.
    pub query_position: usize,
    /// One record per non-pad position, in sequence order.
    pub tokens: Vec<TokenAttention>,
}

impl AttentionExport {
    /// The `n` highest-scoring tokens, best first; earlier positions win ties.
    pub fn top(&self, n: usize) -> Vec<&TokenAttention> {
        let mut sorted: Vec<&TokenAttention> = self.tokens.iter().collect();
        sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.position.cmp(&b.position)));
        sorted.truncate(n);
        sorted
    }

    /// Scores lie in [0, 1] and sum to 1 within `tolerance`.
    pub fn validate(&self, tolerance: f64) -> Result<()> {
        if let Some(t) = self.tokens.iter().find(|t| !(0.0..=1.0).contains(&t.score)) {
            return Err(Error::Numeric(format!("attention score {} at position {}", t.score, t.position)));
        }
        let total: f64 = self.tokens.iter().map(|t| t.score).sum();
        if (total - 1.0).abs() > tolerance {
            return Err(Error::Numeric(format!("attention scores sum to {total}")));
        }
        Ok(())
    }
}

pub fn export_attention<T: Scalar>(model: &Model<T>, vocab: &Vocab, entry: &EncodedEntry) -> Result<AttentionExport> {
    if entry.ids.get(entry.mask_pos).is_none_or(|&t| t == PAD_ID) {
        return Err(Error::Shape(format!("mask position {} is not a real token", entry.mask_pos)));
    }
    let maps = model.attention(&entry.ids)?;
    let last = maps.layers.last().expect("a model has at least one layer");
    let heads = last.shape()[0];
    let mut tokens = Vec::new();
    for (pos, &id) in entry.ids.iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        let score = (0..heads).map(|h| last[[h, entry.mask_pos, pos]]).sum::<f64>() / heads as f64;
        let token = vocab
            .token(id)
            .ok_or_else(|| Error::InvalidArgument(format!("token id {id} outside the vocabulary")))?;
        tokens.push(TokenAttention {
            position: pos,
            token: token.to_string(),
            score,
        });
    }
    Ok(AttentionExport {
        layer: maps.layers.len() - 1,
        heads,
        query_position: entry.mask_pos,
        tokens,
    })
}
