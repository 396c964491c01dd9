//! Self-describing TOML checkpoints for trained policies.
//!
//! Floats are written in Rust's shortest round-trip form, so loading a saved
//! checkpoint reproduces inference bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::Kernel;
use crate::policy::{LstmPolicy, PolicyError, SearchSpace};
use crate::training::{LossKind, TrainConfig};

pub const FORMAT: &str = "rnnbbo-lstm-policy";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Parse(String),
    #[error("unsupported checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    dim: usize,
    hidden: usize,
    loss: LossKind,
    workers: usize,
    space: SearchSpace,
    kernel: Kernel,
    tensors: Vec<Tensor>,
}

/// A policy together with the context it was trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: LstmPolicy,
    pub space: SearchSpace,
    pub kernel: Kernel,
    pub loss: LossKind,
    pub workers: usize,
}

impl Checkpoint {
    pub fn from_training(policy: &LstmPolicy, config: &TrainConfig) -> Self {
        Checkpoint {
            policy: policy.clone(),
            space: SearchSpace::unit(config.dim),
            kernel: config.kernel,
            loss: config.loss,
            workers: config.workers,
        }
    }

    pub fn to_toml(&self) -> String {
        let shape = self.policy.shape();
        let (gates, output) = self.policy.params().split_at(shape.gate_len());
        let doc = Document {
            format: FORMAT.into(),
            version: VERSION,
            dim: shape.dim,
            hidden: shape.hidden,
            loss: self.loss,
            workers: self.workers,
            space: self.space.clone(),
            kernel: self.kernel,
            tensors: vec![
                Tensor { name: "gates".into(), shape: vec![4 * shape.hidden, shape.input_width()], data: gates.to_vec() },
                Tensor { name: "output".into(), shape: vec![shape.dim, shape.hidden + 1], data: output.to_vec() },
            ],
        };
        toml::to_string(&doc).expect("checkpoint documents always serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, CheckpointError> {
        let doc: Document = toml::from_str(text).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(CheckpointError::Format(format!("format tag {:?}, expected {FORMAT:?}", doc.format)));
        }
        if doc.version != VERSION {
            return Err(CheckpointError::Format(format!("version {}, expected {VERSION}", doc.version)));
        }
        doc.space.validate()?;
        if doc.space.dim() != doc.dim {
            return Err(CheckpointError::Format(format!(
                "search space has dimension {}, policy {}",
                doc.space.dim(),
                doc.dim
            )));
        }
        doc.kernel.validate().map_err(|e| CheckpointError::Format(e.to_string()))?;
        let mut params = Vec::new();
        for (name, rows, cols) in
            [("gates", 4 * doc.hidden, doc.dim + doc.hidden + 3), ("output", doc.dim, doc.hidden + 1)]
        {
            let t = doc
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| CheckpointError::Format(format!("missing tensor {name:?}")))?;
            if t.shape != [rows, cols] || t.data.len() != rows * cols {
                return Err(CheckpointError::Format(format!(
                    "tensor {name:?} has shape {:?} with {} values, expected [{rows}, {cols}]",
                    t.shape,
                    t.data.len()
                )));
            }
            params.extend_from_slice(&t.data);
        }
        if doc.tensors.len() != 2 {
            return Err(CheckpointError::Format(format!("expected 2 tensors, found {}", doc.tensors.len())));
        }
        let policy = LstmPolicy::from_params(doc.dim, doc.hidden, params)?;
        Ok(Checkpoint { policy, space: doc.space, kernel: doc.kernel, loss: doc.loss, workers: doc.workers })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_toml())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }
}
