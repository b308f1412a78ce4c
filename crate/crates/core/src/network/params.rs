//! Trainable parameters of the learned solver, their initialization and the
//! versioned checkpoint format.

use crate::autodiff::{Tape, Value};
use crate::error::{Error, Result};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "bnet-ckpt-v1";

/// Architecture sizes. The encoder hidden state is six latent chunks wide and
/// each decoder hidden layer is eight chunks wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub feature_dim: usize,
    pub latent: usize,
}

impl NetDims {
    pub fn new(latent: usize) -> Self {
        NetDims {
            feature_dim: crate::network::features::FEATURE_COUNT,
            latent,
        }
    }

    /// LSTM hidden size: six chunks of `latent`.
    pub fn hidden(&self) -> usize {
        6 * self.latent
    }

    /// Decoder hidden layer size: eight chunks of `latent`.
    pub fn mlp_hidden(&self) -> usize {
        8 * self.latent
    }
}

impl Default for NetDims {
    fn default() -> Self {
        NetDims::new(128)
    }
}

/// Parameter tensor identifiers, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum ParamId {
    LstmWIh = 0,
    LstmWHh,
    LstmBias,
    QW1,
    QB1,
    QW2,
    QB2,
    KW1,
    KB1,
    KW2,
    KB2,
    EtaW1,
    EtaB1,
    EtaW2,
    EtaB2,
}

pub const PARAM_COUNT: usize = 15;

const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "lstm_w_ih", "lstm_w_hh", "lstm_bias", "q_w1", "q_b1", "q_w2", "q_b2", "k_w1", "k_b1",
    "k_w2", "k_b2", "eta_w1", "eta_b1", "eta_w2", "eta_b2",
];

/// Shape table in `ParamId` order. Two-element shapes are row-major matrices.
fn shapes(dims: &NetDims) -> [Vec<usize>; PARAM_COUNT] {
    let f = dims.feature_dim;
    let h = dims.hidden();
    let l = dims.latent;
    let m = dims.mlp_hidden();
    [
        vec![4 * h, f], // lstm_w_ih
        vec![4 * h, h], // lstm_w_hh
        vec![4 * h],    // lstm_bias
        vec![m, l],     // q_w1
        vec![m],        // q_b1
        vec![l, m],     // q_w2
        vec![l],        // q_b2
        vec![m, l],     // k_w1
        vec![m],        // k_b1
        vec![l, m],     // k_w2
        vec![l],        // k_b2
        vec![m, l],     // eta_w1
        vec![m],        // eta_b1
        vec![1, m],     // eta_w2
        vec![1],        // eta_b2
    ]
}

/// All trainable weights, stored as flat tensors in `ParamId` order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub dims: NetDims,
    data: Vec<Vec<f64>>,
}

impl NetParams {
    /// Seeded initialization: weight matrices uniform in `[-a, a]` with
    /// `a = 1/sqrt(fan_in)`, biases zero.
    pub fn init(dims: NetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = shapes(&dims)
            .iter()
            .map(|shape| {
                let len: usize = shape.iter().product();
                if shape.len() == 2 {
                    let bound = 1.0 / (shape[1] as f64).sqrt();
                    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
                } else {
                    vec![0.0; len]
                }
            })
            .collect();
        NetParams { dims, data }
    }

    pub fn tensor(&self, id: ParamId) -> &[f64] {
        &self.data[id as usize]
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.data.iter().map(|t| t.len()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.data.iter().map(|t| t.len()).sum()
    }

    /// Mutable access to the flat tensors, in `ParamId` order, for the
    /// optimizer.
    pub fn data_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.data
    }

    /// Records every tensor on a tape. Trainable binding creates leaves (so
    /// `backward` produces gradients for them); otherwise constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let shapes = shapes(&self.dims);
        let values = self
            .data
            .iter()
            .zip(shapes.iter())
            .map(|(data, shape)| match (shape.len(), trainable) {
                (2, true) => tape.leaf_matrix(shape[0], shape[1], data.clone()),
                (2, false) => tape.constant_matrix(shape[0], shape[1], data.clone()),
                (_, true) => tape.leaf(data.clone()),
                (_, false) => tape.constant(data.clone()),
            })
            .collect();
        BoundParams { values }
    }

    pub fn save(&self, path: &Path, config_echo: Option<serde_json::Value>) -> Result<()> {
        let shapes = shapes(&self.dims);
        let tensors = self
            .data
            .iter()
            .enumerate()
            .map(|(i, data)| {
                let mut bytes = Vec::with_capacity(data.len() * 8);
                for v in data {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                CheckpointTensor {
                    name: PARAM_NAMES[i].to_string(),
                    shape: shapes[i].clone(),
                    data_b64: BASE64.encode(&bytes),
                }
            })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            dims: self.dims,
            config: config_echo,
            tensors,
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<serde_json::Value>)> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT:?}",
                file.format
            )));
        }
        let expect = shapes(&file.dims);
        if file.tensors.len() != PARAM_COUNT {
            return Err(Error::Checkpoint(format!(
                "expected {PARAM_COUNT} tensors, found {}",
                file.tensors.len()
            )));
        }
        let mut data = Vec::with_capacity(PARAM_COUNT);
        for (i, tensor) in file.tensors.iter().enumerate() {
            if tensor.name != PARAM_NAMES[i] {
                return Err(Error::Checkpoint(format!(
                    "tensor {i} named {:?}, expected {:?}",
                    tensor.name, PARAM_NAMES[i]
                )));
            }
            if tensor.shape != expect[i] {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    tensor.name, tensor.shape, expect[i]
                )));
            }
            let bytes = BASE64
                .decode(&tensor.data_b64)
                .map_err(|e| Error::Checkpoint(format!("tensor {:?}: {e}", tensor.name)))?;
            let len: usize = tensor.shape.iter().product();
            if bytes.len() != len * 8 {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?}: {} bytes, expected {}",
                    tensor.name,
                    bytes.len(),
                    len * 8
                )));
            }
            data.push(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunked by 8")))
                    .collect(),
            );
        }
        Ok((
            NetParams {
                dims: file.dims,
                data,
            },
            file.config,
        ))
    }
}

/// Tape handles for every tensor, parallel to `ParamId`.
pub struct BoundParams {
    values: Vec<Value>,
}

impl BoundParams {
    pub fn get(&self, id: ParamId) -> Value {
        self.values[id as usize]
    }

    pub fn all(&self) -> &[Value] {
        &self.values
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    shape: Vec<usize>,
    data_b64: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    dims: NetDims,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
    tensors: Vec<CheckpointTensor>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_biases_zero() {
        let dims = NetDims::new(4);
        let a = NetParams::init(dims, 7);
        let b = NetParams::init(dims, 7);
        assert_eq!(a, b);
        let c = NetParams::init(dims, 8);
        assert_ne!(a, c);
        assert!(a.tensor(ParamId::LstmBias).iter().all(|&v| v == 0.0));
        assert!(a.tensor(ParamId::QB1).iter().all(|&v| v == 0.0));
        let bound = 1.0 / (dims.feature_dim as f64).sqrt();
        assert!(a
            .tensor(ParamId::LstmWIh)
            .iter()
            .all(|&v| v.abs() <= bound));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = NetParams::init(NetDims::new(3), 11);
        params
            .save(&path, Some(serde_json::json!({"note": "test"})))
            .unwrap();
        let (back, echo) = NetParams::load(&path).unwrap();
        assert_eq!(params.dims, back.dims);
        for id in 0..PARAM_COUNT {
            let a = &params.data[id];
            let b = &back.data[id];
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(echo.unwrap()["note"], "test");
    }

    #[test]
    fn load_rejects_wrong_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, r#"{"format":"other","dims":{"feature_dim":29,"latent":2},"tensors":[]}"#)
            .unwrap();
        assert!(NetParams::load(&path).is_err());
    }

    #[test]
    fn parameter_count_default_architecture() {
        let params = NetParams::init(NetDims::default(), 0);
        // LSTM: 3072*29 + 3072*768 + 3072; three decoders on top.
        let lstm = 3072 * 29 + 3072 * 768 + 3072;
        let mlp_qk = 2 * (1024 * 128 + 1024 + 128 * 1024 + 128);
        let mlp_eta = 1024 * 128 + 1024 + 1024 + 1;
        assert_eq!(params.parameter_count(), lstm + mlp_qk + mlp_eta);
    }
}
