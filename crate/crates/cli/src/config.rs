//! Stored experiment configuration: one JSON file that reproduces a full
//! pipeline run bit for bit (given the same inputs), since every random choice
//! flows from the seeds recorded here.

use std::path::PathBuf;

use chrono::{DateTime, Utc};
use coldstart_core::forecaster::{ModelConfig, TrainConfig};
use coldstart_core::policy::PolicySpec;
use coldstart_core::simulator::LatencyModel;
use coldstart_core::synth::SynthPattern;
use coldstart_core::trace::Granularity;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceConfig {
    #[serde(rename_all = "camelCase")]
    Files {
        paths: Vec<PathBuf>,
        #[serde(default = "default_true")]
        http_only: bool,
        start_date: DateTime<Utc>,
    },
    #[serde(rename_all = "camelCase")]
    Synth {
        series: Vec<SynthSeriesConfig>,
        start_date: DateTime<Utc>,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthSeriesConfig {
    pub function_id: String,
    #[serde(flatten)]
    pub pattern: SynthPattern,
    pub length: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClusteringConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            eps: 0.35,
            min_pts: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluationConfig {
    pub num_samples: usize,
    pub seed: u64,
    pub seasonal_period: usize,
    /// Stride between training windows.
    pub stride: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            num_samples: 100,
            seed: 0,
            seasonal_period: 1440,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    pub granularity: Granularity,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    pub model: ModelConfig,
    /// Separate (usually smaller) config for gap-series models; defaults to
    /// `model`.
    #[serde(default)]
    pub gap_model: Option<ModelConfig>,
    pub training: TrainConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub latency: LatencyModel,
    /// Cap on how many cluster representatives the run processes.
    #[serde(default = "default_max_functions")]
    pub max_functions: usize,
    pub output_dir: PathBuf,
}

fn default_max_functions() -> usize {
    3
}

impl ExperimentConfig {
    pub fn gap_model(&self) -> ModelConfig {
        self.gap_model.clone().unwrap_or_else(|| self.model.clone())
    }
}
