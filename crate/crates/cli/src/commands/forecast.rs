//! `coldstart forecast`: sample a predictive distribution from a checkpoint.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use coldstart_core::forecaster::{
    build_gap_input, build_input, load_checkpoint, Checkpoint, CheckpointModel,
    ForecastDistribution, ForecastInput, ForecastOutput, Gru, SequenceModel, Transformer,
};
use coldstart_core::trace::{to_gap_series, Granularity, InvocationSeries};

use crate::commands::train::TargetArg;
use crate::util::{pick_function, read_series_file, write_json_pretty, CliError};

#[derive(Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "")]
    pub function: String,
    #[arg(long, value_enum, default_value = "counts")]
    pub target: TargetArg,
    /// Forecast origin step; "last" forecasts past the series end.
    #[arg(long, default_value = "last")]
    pub t0: String,
    #[arg(long, default_value_t = 100)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// A checkpointed model of either architecture.
pub enum LoadedModel {
    Transformer(Transformer),
    Recurrent(Gru),
}

impl LoadedModel {
    pub fn forecast(
        &self,
        input: &ForecastInput,
        num_samples: usize,
        seed: u64,
    ) -> Result<ForecastDistribution, CliError> {
        let dist = match self {
            LoadedModel::Transformer(m) => m.forecast(input, num_samples, seed)?,
            LoadedModel::Recurrent(m) => m.forecast(input, num_samples, seed)?,
        };
        Ok(dist)
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    let checkpoint: Checkpoint = load_checkpoint(file)?;
    Ok(match &checkpoint.model {
        CheckpointModel::Transformer { .. } => {
            LoadedModel::Transformer(checkpoint.into_transformer()?)
        }
        CheckpointModel::Recurrent { .. } => LoadedModel::Recurrent(checkpoint.into_gru()?),
    })
}

/// Build the model input at `t0` for either target. Recurrent checkpoints
/// reuse the transformer input layout, so a model config describing the
/// feature assembly is required; for transformer checkpoints it is their own.
pub fn input_at(
    model: &LoadedModel,
    series: &InvocationSeries,
    target: TargetArg,
    t0: usize,
) -> Result<ForecastInput, CliError> {
    let config = match model {
        LoadedModel::Transformer(m) => m.config.clone(),
        LoadedModel::Recurrent(m) => {
            // a minimal config that reproduces the feature layout
            let mut config = match series.granularity {
                Granularity::Minute => coldstart_core::forecaster::ModelConfig::default_minute(),
                Granularity::Hour => coldstart_core::forecaster::ModelConfig::default_hourly(),
            };
            config.context_length = m.config.context_length;
            config.prediction_length = m.config.prediction_length;
            config.cardinality = m.config.cardinality;
            config.embedding_dimension = m.config.embedding_dimension;
            config.lags_sequence = vec![1];
            config
        }
    };
    let input = match target {
        TargetArg::Counts => build_input(series, t0, &config, 0)?,
        TargetArg::Gaps => {
            let gaps = to_gap_series(series)?;
            build_gap_input(&gaps, t0, &config, 0)?
        }
    };
    Ok(input)
}

pub fn run(args: ForecastArgs) -> Result<(), CliError> {
    let series = pick_function(read_series_file(&args.series)?, &args.function)?;
    let model = load_model(&args.checkpoint)?;

    let target_len = match args.target {
        TargetArg::Counts => series.len(),
        TargetArg::Gaps => to_gap_series(&series)?.gaps.len(),
    };
    let t0 = if args.t0 == "last" {
        target_len
    } else {
        args.t0
            .parse::<usize>()
            .map_err(|_| CliError::input(format!("bad --t0 {:?}", args.t0)))?
    };

    let input = input_at(&model, &series, args.target, t0)?;
    let dist = model.forecast(&input, args.num_samples, args.seed)?;
    let granularity = match (args.target, series.granularity) {
        (TargetArg::Gaps, _) => "gap-minutes",
        (_, Granularity::Minute) => "minute",
        (_, Granularity::Hour) => "hour",
    };
    let output = ForecastOutput::new(
        &series.function_id,
        t0,
        granularity,
        &dist,
        &[0.5, 0.9],
    );
    write_json_pretty(&args.out, &output)?;
    println!(
        "forecast horizon {} with {} sample(s) written to {}",
        dist.horizon(),
        dist.num_samples,
        args.out.display()
    );
    Ok(())
}
