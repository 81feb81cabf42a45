use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::numerics::Tensor;

const FORMAT: &str = "symgraph-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Versioned JSON container for a model config, its label names and all
/// named parameter tensors. Values round-trip bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub config: ModelConfig,
    pub labels: Vec<String>,
    params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, labels: &[String]) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            config: model.config().clone(),
            labels: labels.to_vec(),
            params: model
                .params()
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking every expected parameter is present
    /// with the right shape.
    pub fn to_model(&self) -> Result<Model> {
        self.config.validate()?;
        let vocab_rows = self
            .params
            .iter()
            .find(|p| p.name == "embeddings")
            .map(|p| p.shape[0]);
        if self.config.train_embeddings && vocab_rows.is_none() {
            return Err(Error::Checkpoint("missing parameter embeddings".into()));
        }
        let model = Model::build(self.config.clone(), vocab_rows, |spec| {
            let stored = self
                .params
                .iter()
                .find(|p| p.name == spec.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", spec.name)))?;
            Tensor::new(stored.shape.clone(), stored.data.clone())
        })?;
        if model.params().len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params().len(),
                self.params.len()
            )));
        }
        if model.params().iter().any(|p| !p.value.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter value".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format {:?}", ckpt.format)));
        }
        if ckpt.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }
}
