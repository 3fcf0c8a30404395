//! Forward and backward passes.
//!
//! Sequences are concatenated row-wise so every linear layer is one matrix
//! product over all real tokens of a batch; attention runs per sequence.
//! Padding tokens are dropped before anything is computed, so they cannot
//! influence the result.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::loss::log_softmax;
use super::ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, softmax_rows, softmax_rows_backward,
    LayerNormCache,
};
use super::params::*;
use super::{ModelConfig, Params, Scalar};
use crate::error::{Error, Result};
use crate::seed;
use crate::tokenizer::{EncodedEntry, PAD_ID};

/// Input for one masked sequence.
#[derive(Debug, Clone, Copy)]
pub struct Sequence<'a> {
    pub ids: &'a [u32],
    pub mask_pos: usize,
    pub candidates: &'a [u32],
    pub target: usize,
}

impl<'a> From<&'a EncodedEntry> for Sequence<'a> {
    fn from(e: &'a EncodedEntry) -> Self {
        Sequence {
            ids: &e.ids,
            mask_pos: e.mask_pos,
            candidates: &e.candidates,
            target: e.target,
        }
    }
}

/// A batch with padding removed and sequences laid end to end.
#[derive(Debug, Clone)]
pub struct Batch {
    ids: Vec<u32>,
    positions: Vec<usize>,
    /// (first row, length) per sequence.
    spans: Vec<(usize, usize)>,
    mask_rows: Vec<usize>,
    candidates: Vec<Vec<u32>>,
    targets: Vec<usize>,
}

impl Batch {
    pub fn new<'a>(seqs: impl IntoIterator<Item = Sequence<'a>>, config: &ModelConfig) -> Result<Self> {
        let mut b = Batch {
            ids: Vec::new(),
            positions: Vec::new(),
            spans: Vec::new(),
            mask_rows: Vec::new(),
            candidates: Vec::new(),
            targets: Vec::new(),
        };
        for seq in seqs {
            if seq.ids.get(seq.mask_pos).is_none_or(|&t| t == PAD_ID) {
                return Err(Error::Shape(format!(
                    "mask position {} is outside the sequence or on padding",
                    seq.mask_pos
                )));
            }
            if seq.target >= seq.candidates.len() {
                return Err(Error::Shape(format!(
                    "target {} outside {} candidates",
                    seq.target,
                    seq.candidates.len()
                )));
            }
            if let Some(&c) = seq.candidates.iter().find(|&&c| c as usize >= config.vocab_size) {
                return Err(Error::Shape(format!("candidate id {c} outside the vocabulary")));
            }
            let mask_offset = seq.ids[..seq.mask_pos].iter().filter(|&&t| t != PAD_ID).count();
            let start = b.push_tokens(seq.ids, config)?;
            b.mask_rows.push(start + mask_offset);
            b.candidates.push(seq.candidates.to_vec());
            b.targets.push(seq.target);
        }
        if b.spans.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        Ok(b)
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a EncodedEntry>, config: &ModelConfig) -> Result<Self> {
        Self::new(entries.into_iter().map(Sequence::from), config)
    }

    /// A single sequence without a prediction head, for attention export.
    fn unlabelled(ids: &[u32], config: &ModelConfig) -> Result<Self> {
        let mut b = Batch {
            ids: Vec::new(),
            positions: Vec::new(),
            spans: Vec::new(),
            mask_rows: Vec::new(),
            candidates: Vec::new(),
            targets: Vec::new(),
        };
        b.push_tokens(ids, config)?;
        Ok(b)
    }

    fn push_tokens(&mut self, ids: &[u32], config: &ModelConfig) -> Result<usize> {
        let start = self.ids.len();
        let mut n = 0;
        for &t in ids.iter().filter(|&&t| t != PAD_ID) {
            if t as usize >= config.vocab_size {
                return Err(Error::Shape(format!("token id {t} outside the vocabulary")));
            }
            self.ids.push(t);
            self.positions.push(n);
            n += 1;
        }
        if n == 0 {
            return Err(Error::Shape("sequence has no tokens besides padding".into()));
        }
        if n > config.max_len {
            return Err(Error::Shape(format!("sequence of {n} tokens exceeds max_len {}", config.max_len)));
        }
        self.spans.push((start, n));
        Ok(start)
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.ids.len()
    }

    pub fn candidates(&self, i: usize) -> &[u32] {
        &self.candidates[i]
    }

    pub fn target(&self, i: usize) -> usize {
        self.targets[i]
    }
}

/// Training-time dropout, keyed on (seed, step) so that masks are
/// reproducible.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
    pub step: u64,
}

impl Dropout {
    /// Inverted-dropout multipliers: 0 or `1/(1-rate)`.
    fn mask<T: Scalar>(&self, site: u64, shape: (usize, usize)) -> Option<Array2<T>> {
        if self.rate <= 0.0 {
            return None;
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        let mut rng = seed::rng(&[self.seed, 0x64726f70, self.step, site]);
        Some(Array2::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < self.rate {
                T::zero()
            } else {
                keep
            }
        }))
    }
}

struct LayerCache<T> {
    ln1: LayerNormCache<T>,
    a: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array3<T>>,
    ctx: Array2<T>,
    drop_attn: Option<Array2<T>>,
    ln2: LayerNormCache<T>,
    b: Array2<T>,
    u: Array2<T>,
    g: Array2<T>,
    drop_ffn: Option<Array2<T>>,
}

struct Encoded<T> {
    x: Array2<T>,
    drop_emb: Option<Array2<T>>,
    layers: Vec<LayerCache<T>>,
}

/// Per-layer attention weights of one sequence, `[heads, n, n]` each,
/// with zero rows and columns at padding positions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    pub layers: Vec<Array3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

fn gather_rows<T: Scalar>(m: &Array2<T>, rows: &[usize]) -> Array2<T> {
    m.select(Axis(0), rows)
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(Model { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params<T>) -> Result<Self> {
        config.validate()?;
        if !params.matches(&config) {
            return Err(Error::Shape("parameters do not match the model configuration".into()));
        }
        Ok(Model { config, params })
    }

    fn attend(&self, q: &Array2<T>, k: &Array2<T>, v: &Array2<T>, spans: &[(usize, usize)]) -> (Array2<T>, Vec<Array3<T>>) {
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let per_seq: Vec<(Array2<T>, Array3<T>)> = spans
            .par_iter()
            .map(|&(start, n)| {
                let rows = start..start + n;
                let mut ctx = Array2::zeros((n, self.config.dim));
                let mut probs = Array3::zeros((heads, n, n));
                for h in 0..heads {
                    let cols = h * dh..(h + 1) * dh;
                    let qh = q.slice(s![rows.clone(), cols.clone()]);
                    let kh = k.slice(s![rows.clone(), cols.clone()]);
                    let vh = v.slice(s![rows.clone(), cols.clone()]);
                    let mut sc = qh.dot(&kh.t());
                    sc *= scale;
                    softmax_rows(&mut sc);
                    ctx.slice_mut(s![.., cols]).assign(&sc.dot(&vh));
                    probs.index_axis_mut(Axis(0), h).assign(&sc);
                }
                (ctx, probs)
            })
            .collect();
        let mut ctx = Array2::zeros(q.raw_dim());
        let mut probs = Vec::with_capacity(spans.len());
        for (&(start, n), (c, p)) in spans.iter().zip(per_seq) {
            ctx.slice_mut(s![start..start + n, ..]).assign(&c);
            probs.push(p);
        }
        (ctx, probs)
    }

    #[allow(clippy::too_many_arguments)]
    fn attend_backward(
        &self,
        dctx: &Array2<T>,
        cache: &LayerCache<T>,
        spans: &[(usize, usize)],
    ) -> (Array2<T>, Array2<T>, Array2<T>) {
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let per_seq: Vec<(Array2<T>, Array2<T>, Array2<T>)> = spans
            .par_iter()
            .zip(&cache.probs)
            .map(|(&(start, n), probs)| {
                let rows = start..start + n;
                let d = self.config.dim;
                let (mut dq, mut dk, mut dv) = (Array2::zeros((n, d)), Array2::zeros((n, d)), Array2::zeros((n, d)));
                for h in 0..heads {
                    let cols = h * dh..(h + 1) * dh;
                    let p = probs.index_axis(Axis(0), h);
                    let qh = cache.q.slice(s![rows.clone(), cols.clone()]);
                    let kh = cache.k.slice(s![rows.clone(), cols.clone()]);
                    let vh = cache.v.slice(s![rows.clone(), cols.clone()]);
                    let dch = dctx.slice(s![rows.clone(), cols.clone()]);
                    let dp = dch.dot(&vh.t());
                    dv.slice_mut(s![.., cols.clone()]).assign(&p.t().dot(&dch));
                    let mut ds = softmax_rows_backward(p, dp.view());
                    ds *= scale;
                    dq.slice_mut(s![.., cols.clone()]).assign(&ds.dot(&kh));
                    dk.slice_mut(s![.., cols]).assign(&ds.t().dot(&qh));
                }
                (dq, dk, dv)
            })
            .collect();
        let shape = dctx.raw_dim();
        let (mut dq, mut dk, mut dv) = (Array2::zeros(shape.clone()), Array2::zeros(shape.clone()), Array2::zeros(shape));
        for (&(start, n), (q, k, v)) in spans.iter().zip(per_seq) {
            dq.slice_mut(s![start..start + n, ..]).assign(&q);
            dk.slice_mut(s![start..start + n, ..]).assign(&k);
            dv.slice_mut(s![start..start + n, ..]).assign(&v);
        }
        (dq, dk, dv)
    }

    fn encode(&self, batch: &Batch, dropout: Option<&Dropout>) -> Encoded<T> {
        let p = &self.params;
        let c = &self.config;
        let eps = c.layer_norm_eps;
        let n = batch.num_tokens();
        let tok = p.m2(TOK);
        let pos = p.m2(POS);
        let mut x = Array2::zeros((n, c.dim));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            row.assign(&tok.row(batch.ids[i] as usize));
            row += &pos.row(batch.positions[i]);
        }
        let drop_emb = dropout.and_then(|d| d.mask(0, (n, c.dim)));
        if let Some(m) = &drop_emb {
            x *= m;
        }

        let mut layers = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let w = |slot| layer_index(l, slot);
            let (a, ln1) = layer_norm(x.view(), p.v1(w(LN1_G)), p.v1(w(LN1_B)), eps);
            let q = linear(a.view(), p.m2(w(WQ)), p.v1(w(BQ)));
            let k = linear(a.view(), p.m2(w(WK)), p.v1(w(BK)));
            let v = linear(a.view(), p.m2(w(WV)), p.v1(w(BV)));
            let (ctx, probs) = self.attend(&q, &k, &v, &batch.spans);
            let mut o = linear(ctx.view(), p.m2(w(WO)), p.v1(w(BO)));
            let drop_attn = dropout.and_then(|d| d.mask(1 + 2 * l as u64, (n, c.dim)));
            if let Some(m) = &drop_attn {
                o *= m;
            }
            x += &o;

            let (b, ln2) = layer_norm(x.view(), p.v1(w(LN2_G)), p.v1(w(LN2_B)), eps);
            let u = linear(b.view(), p.m2(w(W1)), p.v1(w(B1)));
            let g = u.mapv(gelu);
            let mut f = linear(g.view(), p.m2(w(W2)), p.v1(w(B2)));
            let drop_ffn = dropout.and_then(|d| d.mask(2 + 2 * l as u64, (n, c.dim)));
            if let Some(m) = &drop_ffn {
                f *= m;
            }
            x += &f;
            layers.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                ctx,
                drop_attn,
                ln2,
                b,
                u,
                g,
                drop_ffn,
            });
        }
        Encoded { x, drop_emb, layers }
    }

    fn final_norm(&self, x: &Array2<T>, rows: &[usize]) -> (Array2<T>, LayerNormCache<T>) {
        let l = self.config.layers;
        let picked = gather_rows(x, rows);
        layer_norm(
            picked.view(),
            self.params.v1(final_gain(l)),
            self.params.v1(final_bias(l)),
            self.config.layer_norm_eps,
        )
    }

    /// Final hidden state at every sequence's mask position, `[batch, dim]`.
    pub fn mask_hidden(&self, batch: &Batch) -> Array2<T> {
        let enc = self.encode(batch, None);
        self.final_norm(&enc.x, &batch.mask_rows).0
    }

    fn logit(&self, h: ndarray::ArrayView1<'_, T>, id: u32) -> f64 {
        let tok = self.params.m2(TOK);
        let bias = self.params.v1(output_bias(self.config.layers));
        (h.dot(&tok.row(id as usize)) + bias[id as usize]).f64()
    }

    /// Logits of `candidates` for one hidden state.
    pub fn candidate_logits(&self, h: ndarray::ArrayView1<'_, T>, candidates: &[u32]) -> Vec<f64> {
        candidates.iter().map(|&c| self.logit(h, c)).collect()
    }

    /// Logits over the whole vocabulary for one hidden state.
    pub fn vocab_logits(&self, h: ndarray::ArrayView1<'_, T>) -> Vec<f64> {
        let tok = self.params.m2(TOK);
        let bias = self.params.v1(output_bias(self.config.layers));
        let z: Array1<T> = tok.dot(&h) + &bias;
        z.iter().map(|x| x.f64()).collect()
    }

    /// Mean constrained cross-entropy of the batch, dropout off.
    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        let hidden = self.mask_hidden(batch);
        let mut total = 0.0;
        for (i, h) in hidden.rows().into_iter().enumerate() {
            let lp = log_softmax(&self.candidate_logits(h, &batch.candidates[i]))?;
            total -= lp[batch.targets[i]];
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean constrained cross-entropy and its gradient.
    pub fn loss_and_grad(&self, batch: &Batch, dropout: Option<&Dropout>) -> Result<(f64, Params<T>)> {
        let c = &self.config;
        let p = &self.params;
        let l_final = c.layers;
        let enc = self.encode(batch, dropout);
        let (hidden, lnf) = self.final_norm(&enc.x, &batch.mask_rows);
        let mut grads = p.zeros_like();
        let inv_b = 1.0 / batch.len() as f64;

        // head
        let mut total = 0.0;
        let mut dhidden = Array2::<T>::zeros(hidden.raw_dim());
        {
            let tok = p.m2(TOK);
            for (i, h) in hidden.rows().into_iter().enumerate() {
                let cands = &batch.candidates[i];
                let lp = log_softmax(&self.candidate_logits(h, cands))?;
                total -= lp[batch.targets[i]];
                for (j, &cid) in cands.iter().enumerate() {
                    let indicator = if j == batch.targets[i] { 1.0 } else { 0.0 };
                    let dz = T::of((lp[j].exp() - indicator) * inv_b);
                    dhidden.row_mut(i).scaled_add(dz, &tok.row(cid as usize));
                    grads.m2_mut(TOK).row_mut(cid as usize).scaled_add(dz, &h);
                    grads.v1_mut(output_bias(l_final))[cid as usize] += dz;
                }
            }
        }
        let loss = total * inv_b;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss is {loss}")));
        }

        let mut dx = Array2::<T>::zeros(enc.x.raw_dim());
        {
            let (gi, bi) = (final_gain(l_final), final_bias(l_final));
            let mut dg = Array1::zeros(c.dim);
            let mut db = Array1::zeros(c.dim);
            let drows = layer_norm_backward(dhidden.view(), &lnf, p.v1(gi), &mut dg.view_mut(), &mut db.view_mut());
            for (r, &row) in batch.mask_rows.iter().enumerate() {
                let mut target = dx.row_mut(row);
                target += &drows.row(r);
            }
            grads.v1_mut(gi).assign(&dg);
            grads.v1_mut(bi).assign(&db);
        }

        for l in (0..c.layers).rev() {
            let cache = &enc.layers[l];
            let w = |slot| layer_index(l, slot);

            // feed-forward block
            let mut df = dx.clone();
            if let Some(m) = &cache.drop_ffn {
                df *= m;
            }
            accumulate_linear(&mut grads, w(W2), w(B2), cache.g.view(), df.view());
            let mut du = df.dot(&p.m2(w(W2)).t());
            du.zip_mut_with(&cache.u, |d, &u| *d = *d * gelu_grad(u));
            accumulate_linear(&mut grads, w(W1), w(B1), cache.b.view(), du.view());
            let db_ = du.dot(&p.m2(w(W1)).t());
            dx += &ln_backward_into(&mut grads, w(LN2_G), w(LN2_B), db_.view(), &cache.ln2, p);

            // attention block
            let mut d_o = dx.clone();
            if let Some(m) = &cache.drop_attn {
                d_o *= m;
            }
            accumulate_linear(&mut grads, w(WO), w(BO), cache.ctx.view(), d_o.view());
            let dctx = d_o.dot(&p.m2(w(WO)).t());
            let (dq, dk, dv) = self.attend_backward(&dctx, cache, &batch.spans);
            accumulate_linear(&mut grads, w(WQ), w(BQ), cache.a.view(), dq.view());
            accumulate_linear(&mut grads, w(WK), w(BK), cache.a.view(), dk.view());
            accumulate_linear(&mut grads, w(WV), w(BV), cache.a.view(), dv.view());
            let mut da = dq.dot(&p.m2(w(WQ)).t());
            da += &dk.dot(&p.m2(w(WK)).t());
            da += &dv.dot(&p.m2(w(WV)).t());
            dx += &ln_backward_into(&mut grads, w(LN1_G), w(LN1_B), da.view(), &cache.ln1, p);
        }

        if let Some(m) = &enc.drop_emb {
            dx *= m;
        }
        {
            let mut dtok = grads.m2_mut(TOK);
            for (i, row) in dx.rows().into_iter().enumerate() {
                let mut t = dtok.row_mut(batch.ids[i] as usize);
                t += &row;
            }
        }
        {
            let mut dpos = grads.m2_mut(POS);
            for (i, row) in dx.rows().into_iter().enumerate() {
                let mut t = dpos.row_mut(batch.positions[i]);
                t += &row;
            }
        }
        Ok((loss, grads))
    }

    /// Attention weights of every layer for one (possibly padded) sequence.
    pub fn attention(&self, ids: &[u32]) -> Result<AttentionMaps> {
        let batch = Batch::unlabelled(ids, &self.config)?;
        let enc = self.encode(&batch, None);
        let real: Vec<usize> = ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != PAD_ID)
            .map(|(i, _)| i)
            .collect();
        let heads = self.config.heads;
        let layers = enc
            .layers
            .iter()
            .map(|cache| {
                let probs = &cache.probs[0];
                let mut full = Array3::zeros((heads, ids.len(), ids.len()));
                for h in 0..heads {
                    for (qi, &qo) in real.iter().enumerate() {
                        for (ki, &ko) in real.iter().enumerate() {
                            full[[h, qo, ko]] = probs[[h, qi, ki]].f64();
                        }
                    }
                }
                full
            })
            .collect();
        Ok(AttentionMaps { layers })
    }
}

fn accumulate_linear<T: Scalar>(grads: &mut Params<T>, wi: usize, bi: usize, x: ArrayView2<'_, T>, dy: ArrayView2<'_, T>) {
    let dw = x.t().dot(&dy);
    let mut gw = grads.m2_mut(wi);
    gw += &dw;
    let mut gb = grads.v1_mut(bi);
    gb += &dy.sum_axis(Axis(0));
}

fn ln_backward_into<T: Scalar>(
    grads: &mut Params<T>,
    gi: usize,
    bi: usize,
    dy: ArrayView2<'_, T>,
    cache: &LayerNormCache<T>,
    params: &Params<T>,
) -> Array2<T> {
    let dim = dy.ncols();
    let mut dg = Array1::zeros(dim);
    let mut db = Array1::zeros(dim);
    let dx = layer_norm_backward(dy, cache, params.v1(gi), &mut dg.view_mut(), &mut db.view_mut());
    let mut g = grads.v1_mut(gi);
    g += &dg;
    let mut b = grads.v1_mut(bi);
    b += &db;
    dx
}
