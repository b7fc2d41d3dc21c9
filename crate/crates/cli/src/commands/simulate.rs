//! `coldstart simulate`: replay one function's trace under container
//! policies, writing Table-style CSV summaries, per-run JSON, and plot data.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use coldstart_core::forecaster::ModelConfig;
use coldstart_core::policy::{
    perfect_foresight, rolling_prewarm_plan, GapForecastHook, ModelGapHook, PolicySpec,
    PrewarmPlan,
};
use coldstart_core::simulator::{
    cold_start_reduction, simulate, ComparisonRow, LatencyModel, SimulationReport,
    SimulationResult, write_comparison_csv,
};
use coldstart_core::trace::{to_gap_series, GapSeries, InvocationSeries};

use crate::commands::forecast::{load_model, LoadedModel};
use crate::util::{
    create_dir, events_with_multiplicity, pick_function, read_series_file, write_json_pretty,
    CliError,
};

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyArg {
    Fixed,
    Adaptive,
    Prewarm,
    Oracle,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value = "")]
    pub function: String,
    /// Policies to replay (repeat the flag).
    #[arg(long = "policy", value_enum, required = true)]
    pub policies: Vec<PolicyArg>,
    /// Fixed idle window, minutes.
    #[arg(long, default_value_t = 10.0)]
    pub window: f64,
    #[arg(long, default_value_t = 0.9)]
    pub quantile: f64,
    #[arg(long, default_value_t = 1.2)]
    pub safety: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clamp_min: f64,
    #[arg(long, default_value_t = 240.0)]
    pub clamp_max: f64,
    #[arg(long, default_value_t = 8)]
    pub max_pool: u32,
    /// Gap-model checkpoint (required by the adaptive policy).
    #[arg(long)]
    pub gap_checkpoint: Option<PathBuf>,
    /// Count-model checkpoint (required by the prewarm policy).
    #[arg(long)]
    pub count_checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500.0)]
    pub latency_cold: f64,
    #[arg(long, default_value_t = 5.0)]
    pub latency_warm: f64,
    #[arg(long, default_value_t = 100.0)]
    pub latency_exec: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Maps full-multiplicity event indices onto collapsed gap-series event
/// indices (several invocations within one minute share a gap history).
pub struct CollapsedHook<'a> {
    inner: Box<dyn GapForecastHook + 'a>,
    map: Vec<usize>,
}

impl GapForecastHook for CollapsedHook<'_> {
    fn next_gap_quantile(&mut self, event_index: usize, q: f64) -> f64 {
        self.inner.next_gap_quantile(self.map[event_index], q)
    }
}

fn collapse_map(events: &[u64]) -> Vec<usize> {
    let mut map = Vec::with_capacity(events.len());
    let mut collapsed: usize = 0;
    for (i, &minute) in events.iter().enumerate() {
        if i > 0 && minute != events[i - 1] {
            collapsed += 1;
        }
        map.push(collapsed);
    }
    map
}

pub struct PreparedPolicy<'a> {
    pub name: String,
    pub spec: PolicySpec,
    pub hook: Option<CollapsedHook<'a>>,
    pub plan: Option<PrewarmPlan>,
}

/// Resolve one policy choice into a spec plus its runtime inputs.
#[allow(clippy::too_many_arguments)]
pub fn prepare_policy<'a>(
    choice: PolicyArg,
    events: &[u64],
    gaps: Option<&'a GapSeries>,
    gap_model: Option<&'a LoadedModel>,
    gap_config: Option<&ModelConfig>,
    count_model: Option<&LoadedModel>,
    series: &InvocationSeries,
    args: &PolicyParams,
) -> Result<PreparedPolicy<'a>, CliError> {
    match choice {
        PolicyArg::Fixed => {
            if args.window <= 0.0 {
                return Err(CliError::input("--window must be positive"));
            }
            Ok(PreparedPolicy {
                name: "fixed".into(),
                spec: PolicySpec::FixedWindow { minutes: args.window },
                hook: None,
                plan: None,
            })
        }
        PolicyArg::Oracle => {
            let oracle = perfect_foresight(events);
            Ok(PreparedPolicy {
                name: "oracle".into(),
                spec: PolicySpec::AdaptiveWindow {
                    quantile: args.quantile,
                    safety_factor: 1.0,
                    min_window: 1.0,
                    max_window: f64::MAX,
                },
                hook: Some(CollapsedHook {
                    inner: Box::new(oracle),
                    // the oracle indexes the full event list directly
                    map: (0..events.len()).collect(),
                }),
                plan: None,
            })
        }
        PolicyArg::Adaptive => {
            let model = gap_model.ok_or_else(|| {
                CliError::input("adaptive policy needs --gap-checkpoint")
            })?;
            let gaps = gaps.ok_or_else(|| {
                CliError::input("adaptive policy needs at least 2 events for a gap series")
            })?;
            let config = gap_config.expect("gap model implies config").clone();
            let hook: Box<dyn GapForecastHook + 'a> = match model {
                LoadedModel::Transformer(m) => Box::new(ModelGapHook::new(
                    m,
                    config,
                    gaps,
                    0,
                    args.num_samples,
                    args.seed,
                )),
                LoadedModel::Recurrent(m) => Box::new(ModelGapHook::new(
                    m,
                    config,
                    gaps,
                    0,
                    args.num_samples,
                    args.seed,
                )),
            };
            Ok(PreparedPolicy {
                name: "adaptive".into(),
                spec: PolicySpec::AdaptiveWindow {
                    quantile: args.quantile,
                    safety_factor: args.safety,
                    min_window: args.clamp_min,
                    max_window: args.clamp_max,
                },
                hook: Some(CollapsedHook {
                    inner: hook,
                    map: collapse_map(events),
                }),
                plan: None,
            })
        }
        PolicyArg::Prewarm => {
            let model = count_model.ok_or_else(|| {
                CliError::input("prewarm policy needs --count-checkpoint")
            })?;
            let plan = match model {
                LoadedModel::Transformer(m) => rolling_prewarm_plan(
                    m,
                    series,
                    &m.config.clone(),
                    args.quantile,
                    args.max_pool,
                    args.num_samples,
                    args.seed,
                )?,
                LoadedModel::Recurrent(_) => {
                    return Err(CliError::input(
                        "prewarm planning expects a transformer count checkpoint",
                    ))
                }
            };
            Ok(PreparedPolicy {
                name: "prewarm".into(),
                spec: PolicySpec::Prewarm {
                    quantile: args.quantile,
                    max_pool: args.max_pool,
                    window_minutes: args.window,
                },
                hook: None,
                plan: Some(plan),
            })
        }
    }
}

/// Flag bundle shared by `simulate` and `run`.
pub struct PolicyParams {
    pub window: f64,
    pub quantile: f64,
    pub safety: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub max_pool: u32,
    pub num_samples: usize,
    pub seed: u64,
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

pub fn write_run_outputs(
    out_dir: &Path,
    function_id: &str,
    policy: &str,
    result: &SimulationResult,
) -> Result<(), CliError> {
    let stem = format!("{}_{}", sanitize(function_id), policy);
    write_json_pretty(
        &out_dir.join(format!("sim_{stem}.json")),
        &SimulationReport::new(function_id, policy, result),
    )?;

    // plot data: idle window over time
    let mut window_csv = String::from("time_minutes,window_minutes\n");
    for entry in &result.window_log {
        window_csv.push_str(&format!("{},{}\n", entry.time_minutes, entry.window_minutes));
    }
    fs::write(out_dir.join(format!("window_{stem}.csv")), window_csv)?;

    // plot data: cumulative cold starts per event
    let mut cold_csv = String::from("event_index,cumulative_cold_starts\n");
    let mut total = 0u64;
    for (i, &cold) in result.cold_flags.iter().enumerate() {
        if cold {
            total += 1;
        }
        cold_csv.push_str(&format!("{i},{total}\n"));
    }
    fs::write(out_dir.join(format!("coldstarts_{stem}.csv")), cold_csv)?;
    Ok(())
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let series = pick_function(read_series_file(&args.series)?, &args.function)?;
    let latency = LatencyModel {
        cold_start_ms: args.latency_cold,
        warm_start_ms: args.latency_warm,
        exec_ms: args.latency_exec,
    };
    if !latency.validate() {
        return Err(CliError::input(
            "latency constants must be non-negative with cold >= warm",
        ));
    }
    let events = events_with_multiplicity(&series);
    let gaps = to_gap_series(&series).ok();
    let gap_model = match &args.gap_checkpoint {
        Some(path) => Some(load_model(path)?),
        None => None,
    };
    let gap_config = gap_model.as_ref().map(|m| match m {
        LoadedModel::Transformer(t) => t.config.clone(),
        LoadedModel::Recurrent(r) => {
            let mut config = ModelConfig::default_minute();
            config.context_length = r.config.context_length;
            config.prediction_length = r.config.prediction_length;
            config.lags_sequence = vec![1];
            config
        }
    });
    let count_model = match &args.count_checkpoint {
        Some(path) => Some(load_model(path)?),
        None => None,
    };

    let params = PolicyParams {
        window: args.window,
        quantile: args.quantile,
        safety: args.safety,
        clamp_min: args.clamp_min,
        clamp_max: args.clamp_max,
        max_pool: args.max_pool,
        num_samples: args.num_samples,
        seed: args.seed,
    };

    create_dir(&args.out_dir)?;
    let mut rows = Vec::new();
    let mut results: Vec<(String, SimulationResult)> = Vec::new();
    for &choice in &args.policies {
        let mut prepared = prepare_policy(
            choice,
            &events,
            gaps.as_ref(),
            gap_model.as_ref(),
            gap_config.as_ref(),
            count_model.as_ref(),
            &series,
            &params,
        )?;
        let result = simulate(
            &events,
            &prepared.spec,
            &latency,
            prepared
                .hook
                .as_mut()
                .map(|h| h as &mut dyn GapForecastHook),
            prepared.plan.as_ref(),
        )?;
        write_run_outputs(&args.out_dir, &series.function_id, &prepared.name, &result)?;
        rows.push(ComparisonRow::new(
            &series.function_id,
            &prepared.name,
            &result,
        ));
        results.push((prepared.name, result));
    }

    let file = fs::File::create(args.out_dir.join("comparison.csv"))?;
    write_comparison_csv(file, &rows).map_err(CliError::from)?;

    // reductions against the first fixed run, when present
    if let Some((_, baseline)) = results.iter().find(|(name, _)| name == "fixed") {
        let mut reductions = std::collections::BTreeMap::new();
        for (name, result) in &results {
            if name != "fixed" {
                if let Ok(r) = cold_start_reduction(baseline, result) {
                    reductions.insert(name.clone(), r);
                }
            }
        }
        if !reductions.is_empty() {
            write_json_pretty(&args.out_dir.join("reductions.json"), &reductions)?;
        }
    }

    for (name, result) in &results {
        println!(
            "{:>8}: {} invocations, {} cold ({:.1} per 100), {:.1} container-minutes",
            name,
            result.invocations,
            result.cold_starts,
            result.cold_starts_per_100,
            result.container_minutes
        );
    }
    Ok(())
}
