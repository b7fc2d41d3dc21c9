//! `coldstart run`: execute a stored experiment config end to end. With fixed
//! seeds a rerun writes byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use coldstart_core::clustering::{cluster_report, compute_features, dbscan, minmax_normalize};
use coldstart_core::forecaster::ForecastOutput;
use coldstart_core::metrics::write_report_csv;
use coldstart_core::policy::{
    rolling_prewarm_plan, GapForecastHook, ModelGapHook, PolicySpec, PrewarmPlan,
};
use coldstart_core::simulator::{simulate, ComparisonRow, write_comparison_csv};
use coldstart_core::synth::generate;
use coldstart_core::trace::io::write_series_csv;
use coldstart_core::trace::{
    filter_http, merge_days, parse_day_file, resample_to_hour, to_gap_series, Granularity,
    InvocationSeries,
};
use serde::Serialize;

use crate::commands::evaluate::evaluate_on_holdout;
use crate::commands::forecast::{input_at, LoadedModel};
use crate::commands::simulate::write_run_outputs;
use crate::commands::train::{build_examples, fit, save_model, write_loss_csv, ModelArg, TargetArg, TrainedModel};
use crate::config::{ExperimentConfig, SourceConfig};
use crate::util::{create_dir, events_with_multiplicity, write_json_pretty, CliError};

#[derive(Args)]
pub struct RunArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Serialize, Default)]
struct RunManifest {
    functions: Vec<String>,
    representatives: Vec<String>,
    #[serde(rename = "skippedSimulations")]
    skipped_simulations: Vec<String>,
}

fn build_series(config: &ExperimentConfig) -> Result<Vec<InvocationSeries>, CliError> {
    let mut series: Vec<InvocationSeries> = match &config.source {
        SourceConfig::Files {
            paths,
            http_only,
            start_date,
        } => {
            let mut tables = Vec::new();
            for path in paths {
                let file = fs::File::open(path).map_err(|e| {
                    CliError::input(format!("cannot open {}: {e}", path.display()))
                })?;
                let rows = parse_day_file(file)
                    .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
                tables.push(if *http_only { filter_http(rows) } else { rows });
            }
            merge_days(&tables, *start_date)?.into_values().collect()
        }
        SourceConfig::Synth { series, start_date } => series
            .iter()
            .map(|s| generate(&s.pattern, s.length, s.seed, &s.function_id, *start_date))
            .collect(),
    };
    series.sort_by(|a, b| a.function_id.cmp(&b.function_id));
    if series.is_empty() {
        return Err(CliError::input("experiment source produced no series"));
    }
    Ok(series)
}

fn representatives(
    config: &ExperimentConfig,
    series: &[InvocationSeries],
    out_dir: &Path,
) -> Result<Vec<String>, CliError> {
    let features = minmax_normalize(&series.iter().map(compute_features).collect::<Vec<_>>());
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.vector.clone()).collect();
    let assignment = dbscan(&points, config.clustering.eps, config.clustering.min_pts)?;
    let report = cluster_report(&assignment, &features);
    write_json_pretty(&out_dir.join("clusters.json"), &report)?;

    let mut chosen: Vec<String> = report
        .clusters
        .iter()
        .map(|c| c.representative_id.clone())
        .collect();
    // an all-noise clustering still needs functions to process
    let mut noise = report.noise.clone();
    noise.sort();
    chosen.extend(noise);
    chosen.truncate(config.max_functions);
    Ok(chosen)
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)?;
    if let Some(dir) = args.out_dir {
        config.output_dir = dir;
    }
    config.model.validate()?;
    for policy in &config.policies {
        policy.validate()?;
    }
    let out_dir = config.output_dir.clone();
    create_dir(&out_dir)?;

    // 1. source -> minute series
    let minute_series = build_series(&config)?;
    let file = fs::File::create(out_dir.join("series.csv"))?;
    write_series_csv(file, &minute_series)?;

    // 2. clustering
    let reps = representatives(&config, &minute_series, &out_dir)?;

    // 3. per-representative modeling
    let mut manifest = RunManifest {
        functions: minute_series.iter().map(|s| s.function_id.clone()).collect(),
        representatives: reps.clone(),
        ..Default::default()
    };
    let mut metric_rows = Vec::new();
    let mut comparison_rows = Vec::new();

    let needs_gap_model = config.policies.iter().any(|p| {
        matches!(
            p,
            PolicySpec::AdaptiveWindow { .. } | PolicySpec::PrewarmPlusAdaptive { .. }
        )
    });
    let needs_count_model_for_prewarm = config.policies.iter().any(|p| {
        matches!(
            p,
            PolicySpec::Prewarm { .. } | PolicySpec::PrewarmPlusAdaptive { .. }
        )
    });

    for rep in &reps {
        let minute = minute_series
            .iter()
            .find(|s| &s.function_id == rep)
            .expect("representative comes from the series set");
        let eval_series = match config.granularity {
            Granularity::Minute => minute.clone(),
            Granularity::Hour => resample_to_hour(minute)?,
        };
        let stem = sanitize(rep);

        // count models: transformer + recurrent baseline
        let examples = build_examples(
            &eval_series,
            TargetArg::Counts,
            &config.model,
            config.evaluation.stride,
        )?;
        let (transformer, history) =
            fit(ModelArg::Transformer, &config.model, &examples, &config.training)?;
        save_model(&transformer, &out_dir.join(format!("ckpt_transformer_{stem}.json")))?;
        write_loss_csv(&out_dir.join(format!("loss_transformer_{stem}.csv")), &history)?;

        let (recurrent, gru_history) =
            fit(ModelArg::Recurrent, &config.model, &examples, &config.training)?;
        save_model(&recurrent, &out_dir.join(format!("ckpt_recurrent_{stem}.json")))?;
        write_loss_csv(&out_dir.join(format!("loss_recurrent_{stem}.csv")), &gru_history)?;

        let transformer_loaded = match transformer {
            TrainedModel::Transformer(m) => LoadedModel::Transformer(m),
            TrainedModel::Recurrent(_) => unreachable!("fit(Transformer) yields a transformer"),
        };
        let recurrent_loaded = match recurrent {
            TrainedModel::Recurrent(m) => LoadedModel::Recurrent(m),
            TrainedModel::Transformer(_) => unreachable!("fit(Recurrent) yields a gru"),
        };

        // forecast at the holdout origin
        let horizon = config.model.prediction_length;
        let t0 = eval_series.len().saturating_sub(horizon);
        let input = input_at(&transformer_loaded, &eval_series, TargetArg::Counts, t0)?;
        let dist = transformer_loaded.forecast(
            &input,
            config.evaluation.num_samples,
            config.evaluation.seed,
        )?;
        let granularity_name = match config.granularity {
            Granularity::Minute => "minute",
            Granularity::Hour => "hour",
        };
        write_json_pretty(
            &out_dir.join(format!("forecast_{stem}.json")),
            &ForecastOutput::new(rep, t0, granularity_name, &dist, &[0.5, 0.9]),
        )?;

        // six-metric table rows
        let models = vec![
            ("transformer".to_string(), &transformer_loaded),
            ("recurrent".to_string(), &recurrent_loaded),
        ];
        metric_rows.extend(evaluate_on_holdout(
            &eval_series,
            TargetArg::Counts,
            &models,
            Some(config.evaluation.seasonal_period),
            config.evaluation.num_samples,
            config.evaluation.seed,
        )?);

        // 4. policy simulations on the minute trace
        if config.policies.is_empty() {
            continue;
        }
        let events = events_with_multiplicity(minute);
        let gaps = to_gap_series(minute).ok();
        let gap_config = config.gap_model();
        let gap_transformer = if needs_gap_model {
            match &gaps {
                Some(gap_series) => {
                    match coldstart_core::forecaster::gap_training_examples(
                        gap_series,
                        &gap_config,
                        0,
                        config.evaluation.stride,
                    ) {
                        Ok(gap_examples) => {
                            let (model, gap_history) = fit(
                                ModelArg::Transformer,
                                &gap_config,
                                &gap_examples,
                                &config.training,
                            )?;
                            save_model(
                                &model,
                                &out_dir.join(format!("ckpt_gap_transformer_{stem}.json")),
                            )?;
                            write_loss_csv(
                                &out_dir.join(format!("loss_gap_transformer_{stem}.csv")),
                                &gap_history,
                            )?;
                            match model {
                                TrainedModel::Transformer(m) => Some(m),
                                TrainedModel::Recurrent(_) => unreachable!(),
                            }
                        }
                        Err(_) => None, // too few gaps for the configured windows
                    }
                }
                None => None,
            }
        } else {
            None
        };

        let count_transformer = if needs_count_model_for_prewarm {
            match &transformer_loaded {
                LoadedModel::Transformer(m) => Some(m),
                LoadedModel::Recurrent(_) => None,
            }
        } else {
            None
        };

        for (index, policy) in config.policies.iter().enumerate() {
            let policy_name = format!("policy{index}_{}", policy_kind_name(policy));
            let needs_gaps = matches!(
                policy,
                PolicySpec::AdaptiveWindow { .. } | PolicySpec::PrewarmPlusAdaptive { .. }
            );
            if needs_gaps && (gap_transformer.is_none() || gaps.is_none()) {
                manifest
                    .skipped_simulations
                    .push(format!("{rep}/{policy_name}: gap model unavailable"));
                continue;
            }
            let needs_plan = matches!(
                policy,
                PolicySpec::Prewarm { .. } | PolicySpec::PrewarmPlusAdaptive { .. }
            );
            let plan: Option<PrewarmPlan> = if needs_plan {
                let (quantile, max_pool) = match policy {
                    PolicySpec::Prewarm { quantile, max_pool, .. } => (*quantile, *max_pool),
                    PolicySpec::PrewarmPlusAdaptive { quantile, max_pool, .. } => {
                        (*quantile, *max_pool)
                    }
                    _ => unreachable!(),
                };
                match count_transformer {
                    Some(model) => Some(rolling_prewarm_plan(
                        model,
                        minute,
                        &config.model,
                        quantile,
                        max_pool,
                        config.evaluation.num_samples,
                        config.evaluation.seed,
                    )?),
                    None => {
                        manifest
                            .skipped_simulations
                            .push(format!("{rep}/{policy_name}: count model unavailable"));
                        continue;
                    }
                }
            } else {
                None
            };

            let mut hook_storage;
            let hook: Option<&mut dyn GapForecastHook> = if needs_gaps {
                hook_storage = ModelGapHook::new(
                    gap_transformer.as_ref().expect("checked above"),
                    gap_config.clone(),
                    gaps.as_ref().expect("checked above"),
                    0,
                    config.evaluation.num_samples,
                    config.evaluation.seed,
                );
                Some(&mut hook_storage)
            } else {
                None
            };

            let result = simulate(&events, policy, &config.latency, hook, plan.as_ref())?;
            write_run_outputs(&out_dir, rep, &policy_name, &result)?;
            comparison_rows.push(ComparisonRow::new(rep, &policy_name, &result));
        }
    }

    // 5. aggregate tables
    let file = fs::File::create(out_dir.join("metrics.csv"))?;
    write_report_csv(file, &metric_rows).map_err(CliError::from)?;
    write_json_pretty(&out_dir.join("metrics.json"), &metric_rows)?;
    if !comparison_rows.is_empty() {
        let file = fs::File::create(out_dir.join("comparison.csv"))?;
        write_comparison_csv(file, &comparison_rows).map_err(CliError::from)?;
    }
    write_json_pretty(&out_dir.join("run_manifest.json"), &manifest)?;
    println!(
        "experiment complete: {} function(s), {} representative(s), outputs in {}",
        manifest.functions.len(),
        manifest.representatives.len(),
        out_dir.display()
    );
    Ok(())
}

fn policy_kind_name(policy: &PolicySpec) -> &'static str {
    match policy {
        PolicySpec::FixedWindow { .. } => "fixed",
        PolicySpec::AdaptiveWindow { .. } => "adaptive",
        PolicySpec::Prewarm { .. } => "prewarm",
        PolicySpec::PrewarmPlusAdaptive { .. } => "prewarmAdaptive",
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}
