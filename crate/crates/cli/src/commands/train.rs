//! `coldstart train`: fit a forecaster on one function's counts or gaps.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use coldstart_core::forecaster::{
    gap_training_examples, save_checkpoint, train, training_examples, Checkpoint, Gru,
    ModelConfig, RecurrentConfig, TrainConfig, TrainExample, Transformer,
};
use coldstart_core::trace::{to_gap_series, Granularity, InvocationSeries};

use crate::util::{pick_function, read_series_file, CliError};

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TargetArg {
    /// Invocation counts per step.
    Counts,
    /// Inter-arrival gaps in minutes.
    Gaps,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum ModelArg {
    Transformer,
    Recurrent,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub series: PathBuf,
    /// Function id; defaults to the first function in the file.
    #[arg(long, default_value = "")]
    pub function: String,
    #[arg(long, value_enum, default_value = "counts")]
    pub target: TargetArg,
    #[arg(long, value_enum, default_value = "transformer")]
    pub model: ModelArg,
    /// Model config JSON; defaults are derived from the series granularity.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub context_length: Option<usize>,
    #[arg(long)]
    pub prediction_length: Option<usize>,
    /// Comma-separated lag offsets.
    #[arg(long)]
    pub lags: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Disable dropout regardless of the model config.
    #[arg(long)]
    pub no_dropout: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-curve CSV (epoch, mean NLL).
    #[arg(long)]
    pub loss_out: Option<PathBuf>,
}

/// Resolve the model config: explicit file, else granularity defaults, with
/// flag overrides on top.
pub fn resolve_model_config(
    file: Option<&Path>,
    granularity: Granularity,
    context_length: Option<usize>,
    prediction_length: Option<usize>,
    lags: Option<&str>,
    no_dropout: bool,
) -> Result<ModelConfig, CliError> {
    let mut config = match file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)?
        }
        None => match granularity {
            Granularity::Minute => ModelConfig::default_minute(),
            Granularity::Hour => ModelConfig::default_hourly(),
        },
    };
    if let Some(c) = context_length {
        config.context_length = c;
    }
    if let Some(p) = prediction_length {
        config.prediction_length = p;
    }
    if let Some(lags) = lags {
        config.lags_sequence = lags
            .split(',')
            .map(|piece| {
                piece
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::input(format!("bad lag {piece:?}")))
            })
            .collect::<Result<_, _>>()?;
    }
    if no_dropout {
        config.dropout = 0.0;
    }
    config.validate()?;
    Ok(config)
}

/// Training windows for the chosen target. For gaps the windows cover the
/// inter-arrival series derived from the minute trace.
pub fn build_examples(
    series: &InvocationSeries,
    target: TargetArg,
    config: &ModelConfig,
    stride: usize,
) -> Result<Vec<TrainExample>, CliError> {
    let examples = match target {
        TargetArg::Counts => training_examples(series, config, 0, stride)?,
        TargetArg::Gaps => {
            let gaps = to_gap_series(series)?;
            gap_training_examples(&gaps, config, 0, stride)?
        }
    };
    Ok(examples)
}

pub enum TrainedModel {
    Transformer(Transformer),
    Recurrent(Gru),
}

/// Fit the requested model and return it with the per-epoch loss history.
pub fn fit(
    kind: ModelArg,
    config: &ModelConfig,
    examples: &[TrainExample],
    train_config: &TrainConfig,
) -> Result<(TrainedModel, Vec<f64>), CliError> {
    match kind {
        ModelArg::Transformer => {
            let mut model = Transformer::new(config.clone(), train_config.seed)?;
            let history = train(&mut model, examples, train_config)?;
            Ok((TrainedModel::Transformer(model), history))
        }
        ModelArg::Recurrent => {
            let mut model = Gru::new(RecurrentConfig::from_model(config), train_config.seed)?;
            let history = train(&mut model, examples, train_config)?;
            Ok((TrainedModel::Recurrent(model), history))
        }
    }
}

pub fn write_loss_csv(path: &Path, history: &[f64]) -> Result<(), CliError> {
    let mut out = String::from("epoch,mean_nll\n");
    for (epoch, loss) in history.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    fs::write(path, out)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), CliError> {
    let checkpoint = match model {
        TrainedModel::Transformer(m) => Checkpoint::from_transformer(m),
        TrainedModel::Recurrent(m) => Checkpoint::from_gru(m),
    };
    let file = fs::File::create(path)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    save_checkpoint(file, &checkpoint)?;
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let series = pick_function(read_series_file(&args.series)?, &args.function)?;
    let config = resolve_model_config(
        args.model_config.as_deref(),
        series.granularity,
        args.context_length,
        args.prediction_length,
        args.lags.as_deref(),
        args.no_dropout,
    )?;
    let examples = build_examples(&series, args.target, &config, args.stride)?;
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: args.seed,
    };
    let (model, history) = fit(args.model, &config, &examples, &train_config)?;
    save_model(&model, &args.out)?;
    if let Some(path) = &args.loss_out {
        write_loss_csv(path, &history)?;
    }
    println!(
        "trained on {} window(s); final mean NLL {:.6}",
        examples.len(),
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}
