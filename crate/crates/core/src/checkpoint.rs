//! Checkpoint persistence.
//!
//! A checkpoint is a single versioned JSON document carrying the config
//! echo, task graph, vocabulary, and every named parameter array. Values
//! round-trip exactly: loading a checkpoint and evaluating reproduces the
//! saved model's metrics bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::graph::TaskGraph;
use crate::model::{ModelConfig, ModelParams};
use crate::train::TrainConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub graph: TaskGraph,
    pub vocab: Vocabulary,
    params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_model(
        params: &ModelParams,
        model: ModelConfig,
        train: TrainConfig,
        graph: TaskGraph,
        vocab: Vocabulary,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model,
            train,
            graph,
            vocab,
            params: params
                .named_tensors()
                .into_iter()
                .map(|(name, t)| NamedArray {
                    name,
                    shape: t.shape(),
                    data: t.value(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path.as_ref(), json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    /// Rebuild the parameter bundle. The structural skeleton comes from the
    /// stored configs; every tensor is then overwritten with the saved data.
    pub fn restore(&self) -> Result<ModelParams> {
        let params = ModelParams::init(&self.model, &self.graph, self.vocab.len(), 0)?;
        let named = params.named_tensors();
        if named.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} arrays, model expects {}",
                self.params.len(),
                named.len()
            )));
        }
        for ((name, tensor), saved) in named.iter().zip(&self.params) {
            if name != &saved.name {
                return Err(Error::Checkpoint(format!(
                    "parameter order mismatch: expected '{name}', found '{}'",
                    saved.name
                )));
            }
            if tensor.shape() != saved.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' has shape {:?}, checkpoint holds {:?}",
                    tensor.shape(),
                    saved.shape
                )));
            }
            tensor.set_value(&saved.data).map_err(|e| {
                Error::Checkpoint(format!("parameter '{name}': {e}"))
            })?;
        }
        Ok(params)
    }
}
