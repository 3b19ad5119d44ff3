use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderModel, ModelConfig, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "masker-encoder";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Serialized model plus free-form metadata (config hash, keyword file, ...).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    version: u32,
    pub config: ModelConfig,
    #[serde(default)]
    pub metadata: std::collections::BTreeMap<String, String>,
    tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_model(model: &EncoderModel) -> Self {
        let tensors = model
            .params
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| Tensor {
                name,
                shape,
                data: data.iter().map(|&x| x as f32).collect(),
            })
            .collect();
        Self {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            metadata: Default::default(),
            tensors,
        }
    }

    pub fn into_model(self) -> Result<EncoderModel> {
        if self.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        self.config.validate()?;
        let mut params = Params::zeros(&self.config);
        let slots = params.tensors_mut();
        if slots.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                slots.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape, dst), src) in slots.into_iter().zip(&self.tensors) {
            if name != src.name || shape != src.shape || dst.len() != src.data.len() {
                return Err(Error::Checkpoint(format!("tensor {} does not match {name} {shape:?}", src.name)));
            }
            for (d, &s) in dst.iter_mut().zip(&src.data) {
                *d = s as f64;
            }
        }
        Ok(EncoderModel {
            config: self.config,
            params,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(BufWriter::new(file), checkpoint)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Checkpoint(e.to_string()))
}
