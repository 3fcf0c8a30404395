//! Classification and ranking metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
}

/// Micro- and macro-averaged F1 for single-label predictions.
///
/// `None` predictions (an unconstrained model answering outside the label
/// set) are wrong answers: a miss for the gold class and a false positive
/// charged to an out-of-vocabulary bucket, so micro-F1 stays equal to
/// accuracy. Macro-F1 averages over the `num_classes` declared classes only;
/// a class that is neither predicted nor present scores 0.
pub fn micro_macro_f1(gold: &[usize], pred: &[Option<usize>], num_classes: usize) -> Result<F1Scores> {
    let c = confusion(gold, pred, num_classes)?;
    let sum = |v: &[usize]| v.iter().sum::<usize>();
    let micro = f1(sum(&c.tp), sum(&c.fp) + c.oov, sum(&c.fn_));
    let macro_ = (0..num_classes).map(|k| f1(c.tp[k], c.fp[k], c.fn_[k])).sum::<f64>() / num_classes as f64;
    Ok(F1Scores { micro, macro_ })
}

struct Confusion {
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
    support: Vec<usize>,
    oov: usize,
}

fn confusion(gold: &[usize], pred: &[Option<usize>], num_classes: usize) -> Result<Confusion> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!("{} gold labels vs {} predictions", gold.len(), pred.len())));
    }
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no examples to score".into()));
    }
    if num_classes == 0 {
        return Err(Error::InvalidArgument("no classes".into()));
    }
    let mut c = Confusion {
        tp: vec![0; num_classes],
        fp: vec![0; num_classes],
        fn_: vec![0; num_classes],
        support: vec![0; num_classes],
        oov: 0,
    };
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= num_classes || p.is_some_and(|p| p >= num_classes) {
            return Err(Error::InvalidArgument(format!("class index outside 0..{num_classes}")));
        }
        c.support[g] += 1;
        match p {
            Some(p) if p == g => c.tp[g] += 1,
            Some(p) => {
                c.fp[p] += 1;
                c.fn_[g] += 1;
            }
            None => {
                c.oov += 1;
                c.fn_[g] += 1;
            }
        }
    }
    Ok(c)
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    /// Gold examples of this class.
    pub support: usize,
    /// Times this class was predicted.
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class precision, recall and F1, in `labels` order. Supports sum to
/// the number of examples.
pub fn per_class_scores(gold: &[usize], pred: &[Option<usize>], labels: &[String]) -> Result<Vec<ClassScores>> {
    let c = confusion(gold, pred, labels.len())?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(k, label)| ClassScores {
            label: label.clone(),
            support: c.support[k],
            predicted: c.tp[k] + c.fp[k],
            precision: ratio(c.tp[k], c.tp[k] + c.fp[k]),
            recall: ratio(c.tp[k], c.support[k]),
            f1: f1(c.tp[k], c.fp[k], c.fn_[k]),
        })
        .collect())
}

fn check_binary(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("ranking metrics need both positive and negative examples".into()));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score; order within ties is irrelevant to
/// the callers since ties are always handled as a group.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // tie-averaged ascending ranks (1-based) of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let pos_f = pos as f64;
    Ok((rank_sum - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// Average precision: precision at each distinct score threshold weighted
/// by the recall gained there.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_binary(scores, labels)?;
    let order = descending(scores);
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut group_tp = 0;
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            group_tp += labels[order[j]] as usize;
            j += 1;
        }
        tp += group_tp;
        seen += j - i;
        ap += (group_tp as f64 / pos as f64) * (tp as f64 / seen as f64);
        i = j;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingScores {
    pub auc: f64,
    pub ap: f64,
}

pub fn auc_ap(scores: &[f64], labels: &[bool]) -> Result<RankingScores> {
    Ok(RankingScores {
        auc: roc_auc(scores, labels)?,
        ap: average_precision(scores, labels)?,
    })
}
