//! Container-management policies derived from forecasts: proactive prewarm
//! pools for the delay problem, adaptive idle windows for the frequency
//! problem, the fixed-window platform default, and a perfect-foresight oracle
//! used as an upper bound in tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecaster::{build_gap_input, ForecastDistribution, ModelConfig, SequenceModel};
use crate::trace::GapSeries;

pub const DEFAULT_FIXED_WINDOW_MINUTES: f64 = 10.0;
pub const DEFAULT_QUANTILE: f64 = 0.9;
pub const DEFAULT_SAFETY_FACTOR: f64 = 1.2;
pub const DEFAULT_MIN_WINDOW_MINUTES: f64 = 1.0;
pub const DEFAULT_MAX_WINDOW_MINUTES: f64 = 240.0;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy: {0}")]
    Invalid(String),
}

/// Serializable policy description used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum PolicySpec {
    #[serde(rename_all = "camelCase")]
    FixedWindow { minutes: f64 },
    #[serde(rename_all = "camelCase")]
    AdaptiveWindow {
        quantile: f64,
        safety_factor: f64,
        min_window: f64,
        max_window: f64,
    },
    #[serde(rename_all = "camelCase")]
    Prewarm {
        quantile: f64,
        max_pool: u32,
        window_minutes: f64,
    },
    #[serde(rename_all = "camelCase")]
    PrewarmPlusAdaptive {
        quantile: f64,
        safety_factor: f64,
        min_window: f64,
        max_window: f64,
        max_pool: u32,
    },
}

impl PolicySpec {
    pub fn adaptive_default() -> PolicySpec {
        PolicySpec::AdaptiveWindow {
            quantile: DEFAULT_QUANTILE,
            safety_factor: DEFAULT_SAFETY_FACTOR,
            min_window: DEFAULT_MIN_WINDOW_MINUTES,
            max_window: DEFAULT_MAX_WINDOW_MINUTES,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let check_quantile = |q: f64| {
            if !(0.0 < q && q < 1.0) {
                return Err(PolicyError::Invalid(format!("quantile {q} outside (0, 1)")));
            }
            Ok(())
        };
        match *self {
            PolicySpec::FixedWindow { minutes } => {
                if minutes <= 0.0 {
                    return Err(PolicyError::Invalid(format!(
                        "fixed window must be positive, got {minutes}"
                    )));
                }
            }
            PolicySpec::AdaptiveWindow {
                quantile,
                safety_factor,
                min_window,
                max_window,
            }
            | PolicySpec::PrewarmPlusAdaptive {
                quantile,
                safety_factor,
                min_window,
                max_window,
                ..
            } => {
                check_quantile(quantile)?;
                if safety_factor < 1.0 {
                    return Err(PolicyError::Invalid(format!(
                        "safety factor {safety_factor} below 1"
                    )));
                }
                if min_window < 1.0 || max_window < min_window {
                    return Err(PolicyError::Invalid(format!(
                        "bad clamp [{min_window}, {max_window}]"
                    )));
                }
            }
            PolicySpec::Prewarm {
                quantile,
                window_minutes,
                ..
            } => {
                check_quantile(quantile)?;
                if window_minutes <= 0.0 {
                    return Err(PolicyError::Invalid(format!(
                        "prewarm window must be positive, got {window_minutes}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The fixed keep-alive policy (platform default 10 minutes).
pub fn fixed_window(minutes: f64) -> Result<PolicySpec, PolicyError> {
    let spec = PolicySpec::FixedWindow { minutes };
    spec.validate()?;
    Ok(spec)
}

/// An idle-window choice made after one observed invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdleWindowDecision {
    #[serde(rename = "atEvent")]
    pub at_event: usize,
    #[serde(rename = "windowMinutes")]
    pub window_minutes: f64,
}

pub(crate) fn clip_window(raw: f64, min_window: f64, max_window: f64) -> f64 {
    raw.max(min_window).min(max_window)
}

/// Window from a quantile of the predicted next gap:
/// `clip(safety_factor * quantile, min, max)`.
pub fn adaptive_window_from_quantile(
    at_event: usize,
    gap_quantile: f64,
    safety_factor: f64,
    min_window: f64,
    max_window: f64,
) -> IdleWindowDecision {
    IdleWindowDecision {
        at_event,
        window_minutes: clip_window(safety_factor * gap_quantile, min_window, max_window),
    }
}

/// Window from a sampled next-gap distribution (its step-0 marginal).
pub fn adaptive_window(
    at_event: usize,
    gap_forecast: &ForecastDistribution,
    quantile: f64,
    safety_factor: f64,
    min_window: f64,
    max_window: f64,
) -> IdleWindowDecision {
    adaptive_window_from_quantile(
        at_event,
        gap_forecast.quantile(quantile, 0),
        safety_factor,
        min_window,
        max_window,
    )
}

/// Warm-pool sizes per forecast step, `min(maxPool, ceil(quantile))`,
/// provisioned before each step begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrewarmPlan {
    /// First step (in trace minutes for minute-granularity forecasts).
    #[serde(rename = "startStep")]
    pub start_step: usize,
    /// Minutes per step (1 for minute forecasts, 60 for hourly).
    #[serde(rename = "stepMinutes")]
    pub step_minutes: u64,
    pub pool: Vec<u32>,
}

pub fn prewarm_schedule(
    count_forecast: &ForecastDistribution,
    quantile: f64,
    max_pool: u32,
    start_step: usize,
    step_minutes: u64,
) -> PrewarmPlan {
    let pool = (0..count_forecast.horizon())
        .map(|t| {
            let q = count_forecast.quantile(quantile, t);
            (q.ceil().max(0.0) as u32).min(max_pool)
        })
        .collect();
    PrewarmPlan {
        start_step,
        step_minutes,
        pool,
    }
}

/// Online prewarm plan over a whole series: tile the trace with consecutive
/// horizon windows, forecast each from the history before it, and concatenate
/// the per-step pool sizes. Steps before the first full context get no pool.
pub fn rolling_prewarm_plan<M: SequenceModel>(
    model: &M,
    series: &crate::trace::InvocationSeries,
    config: &ModelConfig,
    quantile: f64,
    max_pool: u32,
    num_samples: usize,
    seed: u64,
) -> Result<PrewarmPlan, crate::forecaster::ForecastError> {
    use crate::forecaster::build_input;
    let step_minutes = match series.granularity {
        crate::trace::Granularity::Minute => 1,
        crate::trace::Granularity::Hour => 60,
    };
    let mut pool = vec![0u32; series.len()];
    let mut t0 = config.context_length + config.max_lag();
    while t0 < series.len() {
        let input = build_input(series, t0, config, 0)?;
        let dist = model.forecast(&input, num_samples, seed.wrapping_add(t0 as u64))?;
        let tile = prewarm_schedule(&dist, quantile, max_pool, t0, step_minutes);
        for (i, &p) in tile.pool.iter().enumerate() {
            if t0 + i < pool.len() {
                pool[t0 + i] = p;
            }
        }
        t0 += config.prediction_length;
    }
    Ok(PrewarmPlan {
        start_step: 0,
        step_minutes,
        pool,
    })
}

/// Supplies next-gap quantiles to the simulator, re-planned after every
/// observed invocation.
pub trait GapForecastHook {
    /// Quantile level `q` of the predicted gap following event `event_index`.
    fn next_gap_quantile(&mut self, event_index: usize, q: f64) -> f64;
}

/// Upper-bound oracle: it reads the true trace, so its "forecast" of the next
/// gap is the gap itself (plus a hair, so the container survives to the
/// arrival), and its prewarm pools are the true per-minute counts.
pub struct PerfectForesight {
    gaps: Vec<u64>,
    events: Vec<u64>,
}

const ORACLE_EPSILON_MINUTES: f64 = 1e-6;

/// Build the oracle policy from the full trace (sorted event minutes).
pub fn perfect_foresight(events: &[u64]) -> PerfectForesight {
    let gaps = events.windows(2).map(|w| w[1] - w[0]).collect();
    PerfectForesight {
        gaps,
        events: events.to_vec(),
    }
}

impl PerfectForesight {
    /// True per-minute counts capped at `max_pool`, over the whole trace span.
    pub fn prewarm_plan(&self, max_pool: u32) -> PrewarmPlan {
        let span = self.events.last().map_or(0, |&last| last as usize + 1);
        let mut pool = vec![0u32; span];
        for &minute in &self.events {
            let slot = &mut pool[minute as usize];
            *slot = (*slot + 1).min(max_pool);
        }
        PrewarmPlan {
            start_step: 0,
            step_minutes: 1,
            pool,
        }
    }
}

impl GapForecastHook for PerfectForesight {
    fn next_gap_quantile(&mut self, event_index: usize, _q: f64) -> f64 {
        match self.gaps.get(event_index) {
            Some(&gap) => gap as f64 + ORACLE_EPSILON_MINUTES,
            // after the final event any window works; keep it minimal
            None => DEFAULT_MIN_WINDOW_MINUTES,
        }
    }
}

/// Forecast-driven hook: maintains the observed gap history and asks a
/// trained model for the next-gap distribution after each event. Before the
/// model has enough history it falls back to the running mean of observed
/// gaps.
pub struct ModelGapHook<'a, M: SequenceModel> {
    model: &'a M,
    config: ModelConfig,
    gaps: &'a GapSeries,
    static_id: usize,
    num_samples: usize,
    seed: u64,
}

impl<'a, M: SequenceModel> ModelGapHook<'a, M> {
    pub fn new(
        model: &'a M,
        config: ModelConfig,
        gaps: &'a GapSeries,
        static_id: usize,
        num_samples: usize,
        seed: u64,
    ) -> Self {
        ModelGapHook {
            model,
            config,
            gaps,
            static_id,
            num_samples,
            seed,
        }
    }
}

impl<M: SequenceModel> GapForecastHook for ModelGapHook<'_, M> {
    fn next_gap_quantile(&mut self, event_index: usize, q: f64) -> f64 {
        // after event i the known gaps are gaps[0..i]
        let known = event_index.min(self.gaps.gaps.len());
        let required = self.config.context_length + self.config.max_lag();
        if known >= required {
            let input = build_gap_input(self.gaps, known, &self.config, self.static_id)
                .expect("history length checked");
            let dist = self
                .model
                .forecast_one_step(
                    &input,
                    self.num_samples,
                    self.seed.wrapping_add(event_index as u64),
                )
                .expect("one-step forecast");
            return dist.quantile(q, 0);
        }
        if known == 0 {
            return DEFAULT_MIN_WINDOW_MINUTES;
        }
        let sum: u64 = self.gaps.gaps[..known].iter().sum();
        sum as f64 / known as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist_from(samples: Vec<Vec<f64>>) -> ForecastDistribution {
        ForecastDistribution::from_raw_samples(samples, 0)
    }

    #[test]
    fn fixed_window_default_and_bounds() {
        let spec = fixed_window(DEFAULT_FIXED_WINDOW_MINUTES).unwrap();
        assert_eq!(spec, PolicySpec::FixedWindow { minutes: 10.0 });
        assert!(fixed_window(1.0).is_ok());
        assert!(fixed_window(0.0).is_err());
    }

    #[test]
    fn adaptive_window_direct_formula() {
        // degenerate distribution concentrated at 12 minutes
        let dist = dist_from(vec![vec![12.0]; 16]);
        let decision = adaptive_window(3, &dist, 0.9, 1.2, 1.0, 240.0);
        assert_eq!(decision.at_event, 3);
        assert!((decision.window_minutes - 14.4).abs() < 1e-12);
    }

    #[test]
    fn adaptive_window_clamps_small_quantiles() {
        let dist = dist_from(vec![vec![0.1]; 8]);
        let decision = adaptive_window(0, &dist, 0.9, 1.2, 1.0, 240.0);
        assert_eq!(decision.window_minutes, 1.0);
    }

    #[test]
    fn adaptive_window_degenerate_distribution() {
        let dist = dist_from(vec![vec![500.0]; 8]);
        let decision = adaptive_window(0, &dist, 0.5, 1.5, 1.0, 240.0);
        assert_eq!(decision.window_minutes, 240.0); // clip(750)
    }

    #[test]
    fn prewarm_ceiling_and_cap() {
        let dist = dist_from(vec![vec![3.2], vec![3.2], vec![3.2], vec![3.2]]);
        let plan = prewarm_schedule(&dist, 0.9, 8, 0, 1);
        assert_eq!(plan.pool, vec![4]);

        let zero = dist_from(vec![vec![0.0, 0.0]; 4]);
        let plan = prewarm_schedule(&zero, 0.9, 8, 0, 1);
        assert_eq!(plan.pool, vec![0, 0]);

        let big = dist_from(vec![vec![10.5]; 4]);
        let plan = prewarm_schedule(&big, 0.9, 8, 0, 1);
        assert_eq!(plan.pool, vec![8]);
    }

    #[test]
    fn oracle_returns_true_gaps_plus_epsilon() {
        let mut oracle = perfect_foresight(&[0, 10, 25]);
        assert!((oracle.next_gap_quantile(0, 0.9) - 10.0).abs() < 1e-3);
        assert!((oracle.next_gap_quantile(1, 0.9) - 15.0).abs() < 1e-3);
        assert!(oracle.next_gap_quantile(0, 0.9) > 10.0);
        // after the last event
        assert_eq!(oracle.next_gap_quantile(2, 0.9), 1.0);
    }

    #[test]
    fn oracle_prewarm_plan_counts_events() {
        let oracle = perfect_foresight(&[0, 0, 3]);
        let plan = oracle.prewarm_plan(8);
        assert_eq!(plan.pool, vec![2, 0, 0, 1]);
        let capped = oracle.prewarm_plan(1);
        assert_eq!(capped.pool, vec![1, 0, 0, 1]);
    }

    #[test]
    fn empty_trace_has_no_oracle_decisions() {
        let oracle = perfect_foresight(&[]);
        assert!(oracle.gaps.is_empty());
        assert!(oracle.prewarm_plan(4).pool.is_empty());
    }

    #[test]
    fn spec_validation() {
        assert!(PolicySpec::adaptive_default().validate().is_ok());
        assert!(PolicySpec::AdaptiveWindow {
            quantile: 1.0,
            safety_factor: 1.2,
            min_window: 1.0,
            max_window: 240.0
        }
        .validate()
        .is_err());
        assert!(PolicySpec::AdaptiveWindow {
            quantile: 0.9,
            safety_factor: 0.5,
            min_window: 1.0,
            max_window: 240.0
        }
        .validate()
        .is_err());
        assert!(PolicySpec::AdaptiveWindow {
            quantile: 0.9,
            safety_factor: 1.2,
            min_window: 0.5,
            max_window: 240.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn spec_serde_roundtrip() {
        let spec = PolicySpec::adaptive_default();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"adaptiveWindow\""));
        assert!(json.contains("safetyFactor"));
        let back: PolicySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn window_monotone_in_forecast(
            base in proptest::collection::vec(0.1..100.0f64, 4..32),
            bump in 0.0..50.0f64,
            q in 0.05..0.95f64,
            gamma in 1.0..3.0f64
        ) {
            let low = dist_from(base.iter().map(|&g| vec![g]).collect());
            let high = dist_from(base.iter().map(|&g| vec![g + bump]).collect());
            // pre-clamp comparison: use an unbounded clamp
            let wl = adaptive_window(0, &low, q, gamma, 0.0_f64.max(1.0), f64::INFINITY);
            let wh = adaptive_window(0, &high, q, gamma, 1.0, f64::INFINITY);
            prop_assert!(wh.window_minutes >= wl.window_minutes - 1e-12);
        }

        #[test]
        fn clamp_respected_on_every_decision(
            samples in proptest::collection::vec(0.0..500.0f64, 4..64),
            q in 0.05..0.95f64,
            gamma in 1.0..3.0f64,
            min_w in 1.0..10.0f64,
            extra in 1.0..300.0f64
        ) {
            let max_w = min_w + extra;
            let dist = dist_from(samples.iter().map(|&g| vec![g]).collect());
            let d = adaptive_window(0, &dist, q, gamma, min_w, max_w);
            prop_assert!(d.window_minutes >= min_w && d.window_minutes <= max_w);
        }

        #[test]
        fn prewarm_pool_is_integer_bounded(
            samples in proptest::collection::vec(0.0..50.0f64, 4..32),
            q in 0.05..0.95f64,
            cap in 1u32..16
        ) {
            let dist = dist_from(samples.iter().map(|&c| vec![c, c * 0.5]).collect());
            let plan = prewarm_schedule(&dist, q, cap, 0, 1);
            prop_assert_eq!(plan.pool.len(), 2);
            for &p in &plan.pool {
                prop_assert!(p <= cap);
            }
        }
    }
}
