//! Model checkpoints: an 8-byte magic, a little-endian `u64` header length,
//! a JSON header (architecture, tensor shapes, seed, model metadata), then
//! every parameter as a little-endian `f64` in storage order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, LayerParams, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BRLNN/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub shapes: Vec<Vec<usize>>,
    pub num_params: usize,
    pub seed: Option<u64>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn encode(params: &ParamSet, seed: Option<u64>, meta: serde_json::Value) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        architecture: params.architecture().clone(),
        shapes: params.named().iter().map(|(_, t)| t.shape().to_vec()).collect(),
        num_params: params.num_params(),
        seed,
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * header.num_params);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(ParamSet, CheckpointHeader)> {
    let bad = |m: &str| Error::MalformedCheckpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..).ok_or_else(|| bad("truncated"))?;
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])?;
    let blob = &body[hlen..];
    if blob.len() != 8 * header.num_params {
        return Err(bad(&format!(
            "parameter blob has {} bytes, expected {}",
            blob.len(),
            8 * header.num_params
        )));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if !header.shapes.len().is_multiple_of(2) {
        return Err(bad("odd tensor count"));
    }
    let mut layers = Vec::with_capacity(header.shapes.len() / 2);
    let mut off = 0;
    for pair in header.shapes.chunks_exact(2) {
        let mut take = |shape: &Vec<usize>| -> Result<Tensor> {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape.clone(), values.get(off..off + n).ok_or_else(|| bad("short blob"))?.to_vec())?;
            off += n;
            Ok(t)
        };
        let weight = take(&pair[0])?;
        let bias = take(&pair[1])?;
        layers.push(LayerParams { weight, bias });
    }
    let params = ParamSet::from_layers(header.architecture.clone(), layers)?;
    Ok((params, header))
}

pub fn save(path: impl AsRef<Path>, params: &ParamSet, seed: Option<u64>, meta: serde_json::Value) -> Result<()> {
    fs::write(path, encode(params, seed, meta)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ParamSet, CheckpointHeader)> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    #[test]
    fn round_trip_is_exact() {
        let arch = Architecture {
            input: [1, 6, 6],
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 2,
                    kernel: 3,
                    stride: 2,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    outputs: 1,
                    activation: Activation::Sigmoid,
                },
            ],
        };
        let p = ParamSet::init(arch, 3).unwrap();
        let bytes = encode(&p, Some(3), serde_json::json!({"role": "test"})).unwrap();
        let (q, h) = decode(&bytes).unwrap();
        assert_eq!(p, q);
        assert_eq!(h.seed, Some(3));
        assert_eq!(h.meta["role"], "test");
        assert_eq!(encode(&q, Some(3), h.meta.clone()).unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        assert!(decode(b"nonsense").is_err());
        let arch = Architecture {
            input: [2, 1, 1],
            layers: vec![LayerSpec::Dense {
                outputs: 1,
                activation: Activation::Identity,
            }],
        };
        let p = ParamSet::init(arch, 1).unwrap();
        let mut bytes = encode(&p, None, serde_json::Value::Null).unwrap();
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(Error::MalformedCheckpoint(_))));
    }
}
