//! Binary checkpoints: `HGMLM1`, a one-byte element width, then the
//! bincode-encoded configuration, parameters and optimizer state.

use std::fs;
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{AdamW, AdamWConfig, Model, ModelConfig, Params, Scalar};
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"HGMLM1";

#[derive(Serialize, Deserialize)]
struct TensorRecord<T> {
    name: String,
    shape: Vec<usize>,
    data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerRecord<T> {
    config: AdamWConfig,
    step: u64,
    m: Vec<TensorRecord<T>>,
    v: Vec<TensorRecord<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Body<T> {
    config: ModelConfig,
    params: Vec<TensorRecord<T>>,
    optimizer: Option<OptimizerRecord<T>>,
}

fn records<T: Scalar>(p: &Params<T>) -> Vec<TensorRecord<T>> {
    p.names
        .iter()
        .zip(&p.tensors)
        .map(|(name, t)| TensorRecord {
            name: name.clone(),
            shape: t.shape().to_vec(),
            data: t.iter().copied().collect(),
        })
        .collect()
}

fn from_records<T: Scalar>(recs: Vec<TensorRecord<T>>) -> Result<Params<T>> {
    let mut names = Vec::with_capacity(recs.len());
    let mut tensors = Vec::with_capacity(recs.len());
    for r in recs {
        let t = ArrayD::from_shape_vec(IxDyn(&r.shape), r.data)
            .map_err(|e| Error::Data(format!("tensor `{}`: {e}", r.name)))?;
        names.push(r.name);
        tensors.push(t);
    }
    Ok(Params { names, tensors })
}

fn width<T: Scalar>() -> u8 {
    std::mem::size_of::<T>() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub optimizer: Option<AdamW<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let body = Body {
            config: self.model.config.clone(),
            params: records(&self.model.params),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerRecord {
                config: o.config.clone(),
                step: o.step,
                m: records(&o.m),
                v: records(&o.v),
            }),
        };
        let mut out = MAGIC.to_vec();
        out.push(width::<T>());
        out.extend(bincode::serialize(&body)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Data("not a model checkpoint (bad magic)".into()));
        }
        let w = bytes[MAGIC.len()];
        if w != width::<T>() {
            return Err(Error::Data(format!(
                "checkpoint holds {}-byte floats, expected {} ({})",
                w,
                width::<T>(),
                T::DTYPE
            )));
        }
        let body: Body<T> = bincode::deserialize(&bytes[MAGIC.len() + 1..])?;
        let model = Model::from_params(body.config, from_records(body.params)?)?;
        let optimizer = match body.optimizer {
            Some(o) => {
                let m = from_records(o.m)?;
                let v = from_records(o.v)?;
                if !m.matches(&model.config) || !v.matches(&model.config) {
                    return Err(Error::Data("optimizer state does not match the model".into()));
                }
                Some(AdamW {
                    config: o.config,
                    m,
                    v,
                    step: o.step,
                })
            }
            None => None,
        };
        Ok(Checkpoint { model, optimizer })
    }
}

pub fn save_checkpoint<T: Scalar>(path: &Path, checkpoint: &Checkpoint<T>) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            max_len: 5,
            layers: 1,
            heads: 2,
            dim: 4,
            ffn: 8,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_with_optimizer() {
        let model = Model::<f32>::new(tiny(), 5).unwrap();
        let mut opt = AdamW::new(AdamWConfig::default(), &model.params);
        opt.step = 7;
        let ck = Checkpoint {
            model,
            optimizer: Some(opt),
        };
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..6], b"HGMLM1");
        assert_eq!(Checkpoint::<f32>::from_bytes(&bytes).unwrap(), ck);
        assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
        assert!(Checkpoint::<f32>::from_bytes(b"nope").is_err());
    }
}
