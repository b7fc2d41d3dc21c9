//! `coldstart evaluate`: the six-metric table on a held-out tail window, for
//! the transformer, the recurrent baseline, and seasonal-naive.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use coldstart_core::forecaster::seasonal_naive;
use coldstart_core::metrics::{evaluate, write_report_csv, MetricRow};
use coldstart_core::trace::{to_gap_series, InvocationSeries};

use crate::commands::forecast::{input_at, load_model, LoadedModel};
use crate::commands::train::TargetArg;
use crate::util::{pick_function, read_series_file, write_json_pretty, CliError};

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "")]
    pub function: String,
    #[arg(long, value_enum, default_value = "counts")]
    pub target: TargetArg,
    /// Transformer checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Recurrent-baseline checkpoint (optional).
    #[arg(long)]
    pub recurrent_checkpoint: Option<PathBuf>,
    /// Season length for the naive baseline (steps).
    #[arg(long)]
    pub seasonal_period: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metric table CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Metric table JSON (carries reasons for undefined metrics).
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

/// Score `models` on the last `(context + horizon)` window: the tail horizon
/// is held out, everything before it is history.
pub fn evaluate_on_holdout(
    series: &InvocationSeries,
    target: TargetArg,
    models: &[(String, &LoadedModel)],
    seasonal_period: Option<usize>,
    num_samples: usize,
    seed: u64,
) -> Result<Vec<MetricRow>, CliError> {
    let values: Vec<f64> = match target {
        TargetArg::Counts => series.values.iter().map(|&v| v as f64).collect(),
        TargetArg::Gaps => to_gap_series(series)?
            .gaps
            .iter()
            .map(|&g| g as f64)
            .collect(),
    };
    let mut rows = Vec::new();
    let mut holdout: Option<(usize, usize)> = None; // (t0, horizon)

    for (name, model) in models {
        let horizon = match model {
            LoadedModel::Transformer(m) => m.config.prediction_length,
            LoadedModel::Recurrent(m) => m.config.prediction_length,
        };
        if values.len() < horizon + 1 {
            return Err(CliError::input(format!(
                "series too short ({}) for horizon {horizon}",
                values.len()
            )));
        }
        let t0 = values.len() - horizon;
        if let Some((prev_t0, _)) = holdout {
            if prev_t0 != t0 {
                return Err(CliError::input(
                    "models disagree on the holdout window (different horizons)",
                ));
            }
        }
        holdout = Some((t0, horizon));
        let input = input_at(model, series, target, t0)?;
        let dist = model.forecast(&input, num_samples, seed)?;
        let actual = &values[t0..];
        let forecast = dist.point_forecast();
        rows.push(MetricRow {
            model: name.clone(),
            dataset: series.function_id.clone(),
            report: evaluate(actual, &forecast)
                .map_err(|e| CliError::input(e.to_string()))?,
        });
    }

    if let (Some(period), Some((t0, horizon))) = (seasonal_period, holdout) {
        let history = &values[..t0];
        let forecast = seasonal_naive(history, period, horizon)?;
        rows.push(MetricRow {
            model: "seasonal_naive".into(),
            dataset: series.function_id.clone(),
            report: evaluate(&values[t0..], &forecast)
                .map_err(|e| CliError::input(e.to_string()))?,
        });
    }
    Ok(rows)
}

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let series = pick_function(read_series_file(&args.series)?, &args.function)?;
    let transformer = load_model(&args.checkpoint)?;
    let mut models = vec![("transformer".to_string(), &transformer)];
    let recurrent = match &args.recurrent_checkpoint {
        Some(path) => Some(load_model(path)?),
        None => None,
    };
    if let Some(model) = &recurrent {
        models.push(("recurrent".to_string(), model));
    }

    let rows = evaluate_on_holdout(
        &series,
        args.target,
        &models,
        args.seasonal_period,
        args.num_samples,
        args.seed,
    )?;

    let file = fs::File::create(&args.out)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", args.out.display())))?;
    write_report_csv(file, &rows).map_err(CliError::from)?;
    if let Some(path) = &args.json_out {
        write_json_pretty(path, &rows)?;
    }
    for row in &rows {
        println!(
            "{:>16}  smape={}",
            row.model,
            row.report.smape.csv_cell()
        );
    }
    Ok(())
}
