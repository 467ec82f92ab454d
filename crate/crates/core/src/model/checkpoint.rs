//! JSON checkpoints holding the model configuration and every parameter.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError};
use crate::diffcore::{ParamStore, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredTensor {
    shape: (usize, usize),
    data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    config: ModelConfig,
    params: BTreeMap<String, StoredTensor>,
}

pub fn to_json(model: &Model) -> Result<String, ModelError> {
    let params = model
        .params()
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                StoredTensor {
                    shape: p.value.shape(),
                    data: p.value.data().to_vec(),
                },
            )
        })
        .collect();
    let ckpt = Checkpoint {
        config: model.config().clone(),
        params,
    };
    Ok(serde_json::to_string(&ckpt)?)
}

/// Rebuilds a model, rejecting parameters whose name or shape does not fit the
/// stored configuration.
pub fn from_json(text: &str) -> Result<Model, ModelError> {
    let mut ckpt: Checkpoint = serde_json::from_str(text)?;
    let mut store = ParamStore::new();
    for (name, shape) in super::parameter_shapes(&ckpt.config) {
        let stored = ckpt
            .params
            .remove(&name)
            .ok_or_else(|| ModelError::MissingParameter(name.clone()))?;
        let (rows, cols) = stored.shape;
        if stored.shape != shape || stored.data.len() != rows * cols {
            return Err(ModelError::ParameterShape {
                name,
                expected: shape,
                found: (rows, if rows == 0 { 0 } else { stored.data.len() / rows.max(1) }),
            });
        }
        store.add(name, Tensor::new(rows, cols, stored.data)?)?;
    }
    if let Some(extra) = ckpt.params.keys().next() {
        return Err(ModelError::UnexpectedParameter(extra.clone()));
    }
    Model::from_params(ckpt.config, store)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelError> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    from_json(&fs::read_to_string(path)?)
}
