//! Named parameter tensors in a fixed declaration order.

use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2, IxDyn};
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar};
use crate::seed;

pub(crate) const TOK: usize = 0;
pub(crate) const POS: usize = 1;
const FIRST_LAYER: usize = 2;

pub(crate) const LN1_G: usize = 0;
pub(crate) const LN1_B: usize = 1;
pub(crate) const WQ: usize = 2;
pub(crate) const BQ: usize = 3;
pub(crate) const WK: usize = 4;
pub(crate) const BK: usize = 5;
pub(crate) const WV: usize = 6;
pub(crate) const BV: usize = 7;
pub(crate) const WO: usize = 8;
pub(crate) const BO: usize = 9;
pub(crate) const LN2_G: usize = 10;
pub(crate) const LN2_B: usize = 11;
pub(crate) const W1: usize = 12;
pub(crate) const B1: usize = 13;
pub(crate) const W2: usize = 14;
pub(crate) const B2: usize = 15;
const PER_LAYER: usize = 16;

const LAYER_NAMES: [&str; PER_LAYER] = [
    "ln1.gain", "ln1.bias", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv", "attn.wo",
    "attn.bo", "ln2.gain", "ln2.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
];

pub(crate) fn layer_index(layer: usize, slot: usize) -> usize {
    FIRST_LAYER + layer * PER_LAYER + slot
}

pub(crate) fn final_gain(layers: usize) -> usize {
    FIRST_LAYER + layers * PER_LAYER
}

pub(crate) fn final_bias(layers: usize) -> usize {
    final_gain(layers) + 1
}

pub(crate) fn output_bias(layers: usize) -> usize {
    final_gain(layers) + 2
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

fn layout(c: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (d, f) = (c.dim, c.ffn);
    let mut out = vec![
        ("embed.token".to_string(), vec![c.vocab_size, d], Init::Normal),
        ("embed.position".to_string(), vec![c.max_len, d], Init::Normal),
    ];
    for l in 0..c.layers {
        let shapes: [(Vec<usize>, Init); PER_LAYER] = [
            (vec![d], Init::Ones),
            (vec![d], Init::Zeros),
            (vec![d, d], Init::Normal),
            (vec![d], Init::Zeros),
            (vec![d, d], Init::Normal),
            (vec![d], Init::Zeros),
            (vec![d, d], Init::Normal),
            (vec![d], Init::Zeros),
            (vec![d, d], Init::Normal),
            (vec![d], Init::Zeros),
            (vec![d], Init::Ones),
            (vec![d], Init::Zeros),
            (vec![d, f], Init::Normal),
            (vec![f], Init::Zeros),
            (vec![f, d], Init::Normal),
            (vec![d], Init::Zeros),
        ];
        for (name, (shape, init)) in LAYER_NAMES.iter().zip(shapes) {
            out.push((format!("layer{l}.{name}"), shape, init));
        }
    }
    out.push(("final_ln.gain".into(), vec![d], Init::Ones));
    out.push(("final_ln.bias".into(), vec![d], Init::Zeros));
    out.push(("head.bias".into(), vec![c.vocab_size], Init::Zeros));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub names: Vec<String>,
    pub tensors: Vec<ArrayD<T>>,
}

impl<T: Scalar> Params<T> {
    /// Weights ~ N(0, init_std²) seeded per tensor, biases 0, gains 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (i, (name, shape, init)) in layout(config).into_iter().enumerate() {
            let n: usize = shape.iter().product();
            let data: Vec<T> = match init {
                Init::Zeros => vec![T::zero(); n],
                Init::Ones => vec![T::one(); n],
                Init::Normal if config.init_std == 0.0 => vec![T::zero(); n],
                Init::Normal => {
                    let normal = Normal::new(0.0, config.init_std).expect("validated std");
                    let mut rng = seed::rng(&[seed, 0x7061_7261_6d73, i as u64]);
                    (0..n).map(|_| T::of(normal.sample(&mut rng))).collect()
                }
            };
            names.push(name);
            tensors.push(ArrayD::from_shape_vec(IxDyn(&shape), data).expect("layout shape matches data"));
        }
        Params { names, tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| ArrayD::zeros(t.raw_dim())).collect(),
        }
    }

    /// Whether every tensor matches the layout `config` implies.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let l = layout(config);
        l.len() == self.tensors.len()
            && l.iter()
                .zip(self.names.iter().zip(&self.tensors))
                .all(|((n, s, _), (name, t))| n == name && s.as_slice() == t.shape())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub(crate) fn m2(&self, i: usize) -> ArrayView2<'_, T> {
        self.tensors[i].view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
    }

    pub(crate) fn v1(&self, i: usize) -> ArrayView1<'_, T> {
        self.tensors[i].view().into_dimensionality::<Ix1>().expect("rank-1 tensor")
    }

    pub(crate) fn m2_mut(&mut self, i: usize) -> ArrayViewMut2<'_, T> {
        self.tensors[i].view_mut().into_dimensionality::<Ix2>().expect("rank-2 tensor")
    }

    pub(crate) fn v1_mut(&mut self, i: usize) -> ArrayViewMut1<'_, T> {
        self.tensors[i].view_mut().into_dimensionality::<Ix1>().expect("rank-1 tensor")
    }

    /// Sum of squares over all tensors, in f64.
    pub fn squared_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| {
                let x = x.f64();
                x * x
            })
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
