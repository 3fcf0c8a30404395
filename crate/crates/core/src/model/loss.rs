//! Softmax and cross-entropy restricted to a candidate label set, in f64.

use crate::error::{Error, Result};

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn log_softmax(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("softmax over an empty candidate set".into()));
    }
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit {x}")));
    }
    let lse = log_sum_exp(xs);
    Ok(xs.iter().map(|x| x - lse).collect())
}

fn gather(logits: &[f64], candidates: &[u32]) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|&c| {
            logits.get(c as usize).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("candidate {c} outside {} logits", logits.len()))
            })
        })
        .collect()
}

/// Log-probabilities over `candidates` only, in candidate order.
pub fn constrained_log_probs(logits: &[f64], candidates: &[u32]) -> Result<Vec<f64>> {
    log_softmax(&gather(logits, candidates)?)
}

/// `-log p(candidates[target])` under the constrained softmax.
pub fn constrained_loss(logits: &[f64], candidates: &[u32], target: usize) -> Result<f64> {
    let lp = constrained_log_probs(logits, candidates)?;
    lp.get(target)
        .map(|l| -l)
        .ok_or_else(|| Error::InvalidArgument(format!("target {target} outside {} candidates", lp.len())))
}
