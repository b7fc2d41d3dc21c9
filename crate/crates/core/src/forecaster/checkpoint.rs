//! Self-describing JSON model checkpoints: version, kind, config, and named
//! weight arrays with shapes.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::Transformer;
use super::recurrent::{Gru, RecurrentConfig};
use super::{ForecastError, ModelConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CheckpointModel {
    Transformer {
        config: ModelConfig,
        weights: Vec<WeightEntry>,
    },
    Recurrent {
        config: RecurrentConfig,
        weights: Vec<WeightEntry>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(flatten)]
    pub model: CheckpointModel,
}

fn collect_weights<F>(visit: F) -> Vec<WeightEntry>
where
    F: FnOnce(&mut dyn FnMut(String, &Tensor)),
{
    let mut out = Vec::new();
    visit(&mut |name, t: &Tensor| {
        out.push(WeightEntry {
            name,
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        })
    });
    out
}

fn restore_weights<F>(
    entries: Vec<WeightEntry>,
    visit_mut: F,
) -> Result<(), ForecastError>
where
    F: FnOnce(&mut dyn FnMut(String, &mut Tensor) -> Result<(), ForecastError>) -> Result<(), ForecastError>,
{
    let mut by_name: BTreeMap<String, WeightEntry> =
        entries.into_iter().map(|e| (e.name.clone(), e)).collect();
    visit_mut(&mut |name, slot: &mut Tensor| {
        let entry = by_name
            .remove(&name)
            .ok_or_else(|| ForecastError::Checkpoint(format!("missing weight {name:?}")))?;
        if entry.shape != slot.shape() {
            return Err(ForecastError::Checkpoint(format!(
                "weight {name:?} has shape {:?}, expected {:?}",
                entry.shape,
                slot.shape()
            )));
        }
        *slot = Tensor::new(entry.shape, entry.data)
            .map_err(|e| ForecastError::Checkpoint(e.to_string()))?;
        Ok(())
    })?;
    if let Some(extra) = by_name.keys().next() {
        return Err(ForecastError::Checkpoint(format!(
            "unknown weight {extra:?} in checkpoint"
        )));
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_transformer(model: &Transformer) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model: CheckpointModel::Transformer {
                config: model.config.clone(),
                weights: collect_weights(|f| model.weights.visit(&mut |n, t| f(n, t))),
            },
        }
    }

    pub fn from_gru(model: &Gru) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            model: CheckpointModel::Recurrent {
                config: model.config.clone(),
                weights: collect_weights(|f| model.weights.visit(&mut |n, t| f(n, t))),
            },
        }
    }

    pub fn into_transformer(self) -> Result<Transformer, ForecastError> {
        self.check_version()?;
        match self.model {
            CheckpointModel::Transformer { config, weights } => {
                let mut model = Transformer::new(config, 0)?;
                restore_weights(weights, |f| {
                    let mut result = Ok(());
                    model.weights.visit_mut(&mut |name, slot| {
                        if result.is_ok() {
                            result = f(name, slot);
                        }
                    });
                    result
                })?;
                Ok(model)
            }
            CheckpointModel::Recurrent { .. } => Err(ForecastError::Checkpoint(
                "checkpoint holds a recurrent model, expected a transformer".into(),
            )),
        }
    }

    pub fn into_gru(self) -> Result<Gru, ForecastError> {
        self.check_version()?;
        match self.model {
            CheckpointModel::Recurrent { config, weights } => {
                let mut model = Gru::new(config, 0)?;
                restore_weights(weights, |f| {
                    let mut result = Ok(());
                    model.weights.visit_mut(&mut |name, slot| {
                        if result.is_ok() {
                            result = f(name, slot);
                        }
                    });
                    result
                })?;
                Ok(model)
            }
            CheckpointModel::Transformer { .. } => Err(ForecastError::Checkpoint(
                "checkpoint holds a transformer, expected a recurrent model".into(),
            )),
        }
    }

    fn check_version(&self) -> Result<(), ForecastError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(ForecastError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {})",
                self.version, CHECKPOINT_VERSION
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(writer: impl Write, checkpoint: &Checkpoint) -> Result<(), ForecastError> {
    serde_json::to_writer(writer, checkpoint)
        .map_err(|e| ForecastError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(reader: impl Read) -> Result<Checkpoint, ForecastError> {
    serde_json::from_reader(reader).map_err(|e| ForecastError::Checkpoint(e.to_string()))
}
