//! Policy checkpoint file: one JSON document with dimensions, provenance and
//! one named numeric array per tensor. Floats are written in shortest
//! round-trip form, so `load(save(p)) == p` bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{PolicyDims, PolicyParams};

pub const CHECKPOINT_FORMAT: &str = "grpo-ground/checkpoint/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub d: usize,
    pub h: usize,
    pub g: usize,
    pub seed: u64,
    pub stage: String,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_params(params: &PolicyParams, seed: u64, stage: &str) -> Self {
        let data = params.as_slice();
        let tensors = params
            .dims
            .tensors()
            .into_iter()
            .map(|(name, off, shape)| {
                let n: usize = shape.iter().product();
                TensorRecord {
                    name,
                    shape,
                    values: data[off..off + n].to_vec(),
                }
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            d: params.dims.d,
            h: params.dims.h,
            g: params.dims.g,
            seed,
            stage: stage.to_string(),
            tensors,
        }
    }

    pub fn to_params(&self) -> Result<PolicyParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format {:?}",
                self.format
            )));
        }
        let dims = PolicyDims::new(self.d, self.h, self.g)?;
        let layout = dims.tensors();
        if layout.len() != self.tensors.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                got: self.tensors.len(),
            });
        }
        let mut data = Vec::with_capacity(dims.num_params());
        for ((name, _, shape), t) in layout.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape {
                return Err(Error::Config(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    t.name, t.shape, name, shape
                )));
            }
            let n: usize = shape.iter().product();
            if t.values.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: t.values.len(),
                });
            }
            data.extend_from_slice(&t.values);
        }
        let params = PolicyParams::from_flat(dims, data)?;
        if !params.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn save(path: &Path, params: &PolicyParams, seed: u64, stage: &str) -> Result<()> {
    let mut s = Checkpoint::from_params(params, seed, stage).to_json()?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(PolicyParams, Checkpoint)> {
    let ckpt = Checkpoint::from_json(&fs::read_to_string(path)?)?;
    Ok((ckpt.to_params()?, ckpt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), d in 1usize..6, h in 1usize..5, g in 2usize..6, scale in 1e-8..1e3f64) {
            let dims = PolicyDims::new(d, h, g).unwrap();
            let mut p = PolicyParams::init(dims, seed);
            p.scale(scale / 0.05);
            let json = Checkpoint::from_params(&p, seed, "sft").to_json().unwrap();
            let back = Checkpoint::from_json(&json).unwrap().to_params().unwrap();
            let bits = |q: &PolicyParams| q.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&p), bits(&back));
        }
    }

    #[test]
    fn file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let p = PolicyParams::init(PolicyDims::new(3, 2, 4).unwrap(), 1);
        save(&path, &p, 1, "grpo").unwrap();
        let (q, meta) = load(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(meta.stage, "grpo");
        assert_eq!(meta.tensors[0].name, "input.weight");

        let mut bad = Checkpoint::from_params(&p, 1, "grpo");
        bad.tensors[3].values.pop();
        assert!(bad.to_params().is_err());
        let mut bad = Checkpoint::from_params(&p, 1, "grpo");
        bad.tensors.swap(0, 1);
        assert!(bad.to_params().is_err());
        assert!(Checkpoint::from_json(r#"{"format":"x","extra":1}"#).is_err());
    }
}
