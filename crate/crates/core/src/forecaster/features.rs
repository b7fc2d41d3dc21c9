//! Input assembly: calendar time features, context standardization, and lag
//! stacking for both invocation-count series and inter-arrival gap series.

use chrono::{DateTime, Datelike, Timelike, Utc};

use super::{ForecastError, ModelConfig};
use crate::tensor::Tensor;
use crate::trace::{GapSeries, Granularity, InvocationSeries};

pub const TIME_FEATURES: usize = 5;

/// Standard deviations below this are floored so dead contexts do not blow up
/// the standardization.
pub const STD_FLOOR: f64 = 1e-3;

/// Context mean/std used to standardize one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleStats {
    pub mean: f64,
    pub std: f64,
}

impl ScaleStats {
    pub fn from_context(context: &[f64]) -> ScaleStats {
        let n = context.len().max(1) as f64;
        let mean = context.iter().sum::<f64>() / n;
        let var = context.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        ScaleStats {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// The five calendar features of one step, each affinely mapped to
/// [-0.5, 0.5]: minute-of-hour (constantly 0 at hourly granularity),
/// hour-of-day, day-of-week, day-of-month, and a log age within the series.
pub fn time_feature_row(
    t: DateTime<Utc>,
    granularity: Granularity,
    index: usize,
    series_len: usize,
) -> [f64; TIME_FEATURES] {
    let minute_of_hour = match granularity {
        Granularity::Minute => t.minute() as f64 / 59.0 - 0.5,
        Granularity::Hour => 0.0,
    };
    let hour_of_day = t.hour() as f64 / 23.0 - 0.5;
    let day_of_week = t.weekday().num_days_from_monday() as f64 / 6.0 - 0.5;
    let day_of_month = (t.day() as f64 - 1.0) / 30.0 - 0.5;
    let age = ((index as f64).ln_1p() / (series_len.max(1) as f64).ln_1p() - 0.5).min(0.5);
    [minute_of_hour, hour_of_day, day_of_week, day_of_month, age]
}

/// Time-feature matrix `[count, 5]` for `count` uniform steps starting at
/// series index `first_index`.
pub fn make_time_features(
    start_time: DateTime<Utc>,
    granularity: Granularity,
    first_index: usize,
    count: usize,
    series_len: usize,
) -> Tensor {
    let mut data = Vec::with_capacity(count * TIME_FEATURES);
    for i in 0..count {
        let index = first_index + i;
        let t = start_time + granularity.step() * index as i32;
        data.extend_from_slice(&time_feature_row(t, granularity, index, series_len));
    }
    Tensor::new(vec![count, TIME_FEATURES], data).expect("time feature shape")
}

/// One standardized model input window: `contextLength + maxLag` past values,
/// their time features, the future time features, and the static category.
#[derive(Debug, Clone)]
pub struct ForecastInput {
    /// Standardized values, length `context_length + max_lag`.
    pub past_values: Vec<f64>,
    /// `[context_length + max_lag, TIME_FEATURES]`.
    pub past_time: Tensor,
    /// `[prediction_length, TIME_FEATURES]`.
    pub future_time: Tensor,
    pub static_id: usize,
    pub scale: ScaleStats,
    pub context_length: usize,
    pub max_lag: usize,
}

impl ForecastInput {
    /// Standardized value of the final context step, the decoder's first
    /// "previous value".
    pub fn last_context_value(&self) -> f64 {
        *self.past_values.last().expect("non-empty context")
    }
}

fn build_from_values(
    values: &[f64],
    time_at: impl Fn(usize) -> DateTime<Utc>,
    granularity: Granularity,
    series_len: usize,
    t0: usize,
    config: &ModelConfig,
    static_id: usize,
) -> Result<ForecastInput, ForecastError> {
    let max_lag = config.max_lag();
    let required = config.context_length + max_lag;
    if t0 < required || t0 > values.len() {
        return Err(ForecastError::InsufficientHistory { t0, required });
    }
    let context = &values[t0 - config.context_length..t0];
    let scale = ScaleStats::from_context(context);
    let past_values: Vec<f64> = values[t0 - required..t0]
        .iter()
        .map(|&v| scale.standardize(v))
        .collect();

    let feature_rows = |first: usize, count: usize| {
        let mut data = Vec::with_capacity(count * TIME_FEATURES);
        for i in 0..count {
            let index = first + i;
            data.extend_from_slice(&time_feature_row(
                time_at(index),
                granularity,
                index,
                series_len,
            ));
        }
        Tensor::new(vec![count, TIME_FEATURES], data).expect("time feature shape")
    };

    Ok(ForecastInput {
        past_values,
        past_time: feature_rows(t0 - required, required),
        future_time: feature_rows(t0, config.prediction_length),
        static_id,
        scale,
        context_length: config.context_length,
        max_lag,
    })
}

/// Build the model input for forecast origin `t0` of a count series.
/// Requires `t0 >= contextLength + maxLag`; the future side only needs
/// timestamps, so `t0` may sit at the series end for live forecasting.
pub fn build_input(
    series: &InvocationSeries,
    t0: usize,
    config: &ModelConfig,
    static_id: usize,
) -> Result<ForecastInput, ForecastError> {
    let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
    build_from_values(
        &values,
        |i| series.start_time + series.granularity.step() * i as i32,
        series.granularity,
        series.len(),
        t0,
        config,
        static_id,
    )
}

/// Build the model input for forecast origin `t0` of a gap series. Past time
/// features use the reconstructed event times; future steps extrapolate event
/// times with the context mean gap, since true future event times depend on
/// the gaps being forecast.
pub fn build_gap_input(
    gaps: &GapSeries,
    t0: usize,
    config: &ModelConfig,
    static_id: usize,
) -> Result<ForecastInput, ForecastError> {
    let values: Vec<f64> = gaps.gaps.iter().map(|&g| g as f64).collect();
    let max_lag = config.max_lag();
    let required = config.context_length + max_lag;
    if t0 < required || t0 > values.len() {
        return Err(ForecastError::InsufficientHistory { t0, required });
    }

    // event time at which gap i begins
    let mut event_minutes = Vec::with_capacity(values.len() + 1);
    let mut acc = 0u64;
    event_minutes.push(0u64);
    for &g in &gaps.gaps {
        acc += g;
        event_minutes.push(acc);
    }
    let context = &values[t0 - config.context_length..t0];
    let mean_gap = (context.iter().sum::<f64>() / context.len() as f64).max(1.0);
    let last_known = event_minutes[t0] as f64;

    build_from_values(
        &values,
        |i| {
            let minutes = if i < event_minutes.len() {
                event_minutes[i] as f64
            } else {
                last_known + mean_gap * (i - t0) as f64
            };
            gaps.first_event_time + chrono::Duration::minutes(minutes.round() as i64)
        },
        Granularity::Minute,
        values.len(),
        t0,
        config,
        static_id,
    )
}

/// One training window: the input plus the horizon targets standardized with
/// the same context scale.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub input: ForecastInput,
    pub targets_std: Vec<f64>,
}

fn examples_from_values(
    values: &[f64],
    build: impl Fn(usize) -> Result<ForecastInput, ForecastError>,
    config: &ModelConfig,
    stride: usize,
) -> Result<Vec<TrainExample>, ForecastError> {
    let window = config.context_length + config.max_lag() + config.prediction_length;
    if values.len() < window {
        return Err(ForecastError::SeriesTooShort {
            len: values.len(),
            required: window,
        });
    }
    let windows = crate::trace::split_series(
        values.len(),
        config.context_length + config.max_lag(),
        config.prediction_length,
        stride,
    )
    .map_err(|_| ForecastError::SeriesTooShort {
        len: values.len(),
        required: window,
    })?;
    let mut examples = Vec::with_capacity(windows.len());
    for w in windows {
        let input = build(w.t0())?;
        let targets_std = values[w.t0()..w.t0() + config.prediction_length]
            .iter()
            .map(|&v| input.scale.standardize(v))
            .collect();
        examples.push(TrainExample { input, targets_std });
    }
    Ok(examples)
}

/// Sliding training windows over a count series.
pub fn training_examples(
    series: &InvocationSeries,
    config: &ModelConfig,
    static_id: usize,
    stride: usize,
) -> Result<Vec<TrainExample>, ForecastError> {
    let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
    examples_from_values(
        &values,
        |t0| build_input(series, t0, config, static_id),
        config,
        stride,
    )
}

/// Sliding training windows over a gap series.
pub fn gap_training_examples(
    gaps: &GapSeries,
    config: &ModelConfig,
    static_id: usize,
    stride: usize,
) -> Result<Vec<TrainExample>, ForecastError> {
    let values: Vec<f64> = gaps.gaps.iter().map(|&g| g as f64).collect();
    examples_from_values(
        &values,
        |t0| build_gap_input(gaps, t0, config, static_id),
        config,
        stride,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> DateTime<Utc> {
        // 2019-07-15 is a Monday
        DateTime::parse_from_rfc3339("2019-07-15T00:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            context_length: 8,
            prediction_length: 4,
            lags_sequence: vec![1, 2, 3],
            cardinality: 2,
            ..ModelConfig::default_minute()
        }
    }

    #[test]
    fn midnight_monday_hits_range_endpoints() {
        let row = time_feature_row(start(), Granularity::Hour, 0, 100);
        assert_eq!(row[0], 0.0); // minute-of-hour is 0 at hourly granularity
        assert_eq!(row[1], -0.5); // hour 0
        assert_eq!(row[2], -0.5); // Monday
    }

    #[test]
    fn hour_23_maps_to_upper_endpoint() {
        let t = start() + chrono::Duration::hours(23);
        let row = time_feature_row(t, Granularity::Hour, 23, 100);
        assert_eq!(row[1], 0.5);
    }

    #[test]
    fn day_of_week_cycles_every_168_hours() {
        let m = make_time_features(start(), Granularity::Hour, 0, 400, 400);
        for i in 0..(400 - 168) {
            assert_eq!(m.at2(i, 2), m.at2(i + 168, 2), "row {i}");
        }
        // and it is not constant within a week
        assert_ne!(m.at2(0, 2), m.at2(24, 2));
    }

    #[test]
    fn features_stay_in_half_open_box() {
        let m = make_time_features(start(), Granularity::Minute, 0, 3000, 3000);
        for v in m.data() {
            assert!((-0.5..=0.5).contains(v), "{v}");
        }
    }

    #[test]
    fn constant_series_standardizes_to_zero() {
        let series = InvocationSeries {
            function_id: "f".into(),
            granularity: Granularity::Minute,
            start_time: start(),
            values: vec![7; 40],
        };
        let cfg = small_config();
        let input = build_input(&series, 20, &cfg, 0).unwrap();
        assert!(input.past_values.iter().all(|&v| v == 0.0));
        assert_eq!(input.scale.mean, 7.0);
        assert_eq!(input.scale.std, STD_FLOOR);
    }

    #[test]
    fn too_little_history_is_rejected() {
        let series = InvocationSeries {
            function_id: "f".into(),
            granularity: Granularity::Minute,
            start_time: start(),
            values: vec![1; 40],
        };
        let cfg = small_config();
        assert!(matches!(
            build_input(&series, 10, &cfg, 0),
            Err(ForecastError::InsufficientHistory { required: 11, .. })
        ));
    }

    #[test]
    fn lag_one_feature_indexes_previous_value() {
        // ramp 0,1,2,... so standardized values are distinct and ordered
        let series = InvocationSeries {
            function_id: "f".into(),
            granularity: Granularity::Minute,
            start_time: start(),
            values: (0..60).collect(),
        };
        let cfg = small_config();
        let t0 = 30;
        let input = build_input(&series, t0, &cfg, 0).unwrap();
        // encoder step t sees value index t0 - context + t; its lag-1 feature
        // must equal the standardized value at that index minus one.
        let required = cfg.context_length + cfg.max_lag();
        for t in 0..cfg.context_length {
            let absolute = input.max_lag + t;
            let lag1 = input.past_values[absolute - 1];
            let direct = input
                .scale
                .standardize(series.values[t0 - required + absolute - 1] as f64);
            assert!((lag1 - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn training_examples_standardize_targets_with_context_scale() {
        let series = InvocationSeries {
            function_id: "f".into(),
            granularity: Granularity::Minute,
            start_time: start(),
            values: (0..40).map(|i| i % 5).collect(),
        };
        let cfg = small_config();
        let examples = training_examples(&series, &cfg, 0, 1).unwrap();
        assert!(!examples.is_empty());
        for ex in &examples {
            assert_eq!(ex.targets_std.len(), cfg.prediction_length);
            assert_eq!(
                ex.input.past_values.len(),
                cfg.context_length + cfg.max_lag()
            );
        }
    }

    #[test]
    fn gap_input_extrapolates_future_times() {
        let gaps = GapSeries {
            function_id: "f".into(),
            gaps: vec![10; 30],
            first_event_time: start(),
        };
        let cfg = small_config();
        let input = build_gap_input(&gaps, 20, &cfg, 0).unwrap();
        assert_eq!(input.future_time.shape(), &[cfg.prediction_length, 5]);
        // context of constant 10-minute gaps: standardized to zero
        assert!(input.past_values.iter().all(|&v| v == 0.0));
    }
}
