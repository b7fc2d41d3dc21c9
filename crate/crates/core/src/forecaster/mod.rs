//! Probabilistic invocation forecasting: an encoder/decoder Transformer with
//! a Student-t output head, a gated recurrent baseline trained through the
//! same loop, and a seasonal-naive point baseline.

pub mod baseline;
pub mod checkpoint;
pub mod distribution;
pub mod features;
pub mod model;
pub mod params;
pub mod recurrent;
pub mod train;

pub use baseline::seasonal_naive;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointModel};
pub use distribution::{ForecastDistribution, ForecastOutput};
pub use features::{
    build_gap_input, build_input, gap_training_examples, make_time_features, time_feature_row,
    training_examples, ForecastInput, ScaleStats, TrainExample, TIME_FEATURES,
};
pub use model::{student_t_nll, BoundTransformer, ForwardTrace, Transformer};
pub use recurrent::{Gru, RecurrentConfig};
pub use train::{train, Adam, Dropout, SequenceModel, TrainConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("insufficient history: t0 = {t0}, need at least {required}")]
    InsufficientHistory { t0: usize, required: usize },
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("series of length {len} too short, need {required}")]
    SeriesTooShort { len: usize, required: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// Hyperparameters of the Transformer forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ModelConfig {
    pub context_length: usize,
    pub prediction_length: usize,
    pub num_layers_encoder: usize,
    pub num_layers_decoder: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub embedding_dimension: usize,
    /// Number of distinct static categories (cluster or function ids).
    pub cardinality: usize,
    pub lags_sequence: Vec<usize>,
    pub feedforward_dim: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::default_minute()
    }
}

impl ModelConfig {
    /// Defaults for minute-granularity series.
    pub fn default_minute() -> Self {
        ModelConfig {
            context_length: 200,
            prediction_length: 100,
            num_layers_encoder: 4,
            num_layers_decoder: 4,
            d_model: 32,
            num_heads: 4,
            embedding_dimension: 2,
            cardinality: 1,
            lags_sequence: vec![1, 2, 3, 4, 5, 10, 30, 60, 1440],
            feedforward_dim: 128,
            dropout: 0.1,
        }
    }

    /// Defaults for hourly series.
    pub fn default_hourly() -> Self {
        ModelConfig {
            lags_sequence: vec![1, 2, 3, 24, 48, 168],
            ..ModelConfig::default_minute()
        }
    }

    pub fn max_lag(&self) -> usize {
        self.lags_sequence.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        if self.d_model == 0 || self.d_model % self.num_heads != 0 {
            return Err(ForecastError::BadConfig(format!(
                "dModel {} must be a positive multiple of numHeads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.lags_sequence.is_empty() {
            return Err(ForecastError::BadConfig("empty lags sequence".into()));
        }
        if self.lags_sequence[0] == 0 {
            return Err(ForecastError::BadConfig("lags must be positive".into()));
        }
        if !self.lags_sequence.windows(2).all(|w| w[0] < w[1]) {
            return Err(ForecastError::BadConfig(
                "lags must be strictly increasing".into(),
            ));
        }
        if self.context_length == 0 || self.prediction_length == 0 {
            return Err(ForecastError::BadConfig(
                "context and prediction length must be positive".into(),
            ));
        }
        if self.cardinality == 0 || self.embedding_dimension == 0 {
            return Err(ForecastError::BadConfig(
                "cardinality and embedding dimension must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ForecastError::BadConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ModelConfig::default_minute().validate().unwrap();
        ModelConfig::default_hourly().validate().unwrap();
        assert_eq!(ModelConfig::default_minute().max_lag(), 1440);
    }

    #[test]
    fn validation_catches_bad_heads_and_lags() {
        let mut cfg = ModelConfig::default_minute();
        cfg.num_heads = 5;
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default_minute();
        cfg.lags_sequence = vec![3, 2];
        assert!(cfg.validate().is_err());

        let mut cfg = ModelConfig::default_minute();
        cfg.lags_sequence = vec![0, 2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_serde_uses_paper_field_names() {
        let cfg = ModelConfig::default_hourly();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"contextLength\":200"));
        assert!(json.contains("\"predictionLength\":100"));
        assert!(json.contains("\"dModel\":32"));
        assert!(json.contains("\"embeddingDimension\":2"));
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
