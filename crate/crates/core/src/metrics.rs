//! Forecast accuracy metrics: sMAPE, explained variance, RMSE, normalized
//! RMSE, R², and Spearman correlation, with explicit handling of the
//! degenerate cases instead of silent NaNs.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: actual {actual}, forecast {forecast}")]
    LengthMismatch { actual: usize, forecast: usize },
    #[error("empty input")]
    Empty,
    #[error("need at least {needed} points, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("actual values have zero range")]
    ZeroRange,
    #[error("actual values have zero variance")]
    ZeroVariance,
    #[error("degenerate ranks: {0} side has a single distinct value")]
    DegenerateRanks(&'static str),
}

fn check_lengths(actual: &[f64], forecast: &[f64]) -> Result<(), MetricError> {
    if actual.len() != forecast.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            forecast: forecast.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Symmetric mean absolute percentage error, factor-2 form with range [0, 2].
/// A term with `|a| + |f| = 0` contributes 0.
pub fn smape(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    let sum: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(&a, &f)| {
            let denom = a.abs() + f.abs();
            if denom == 0.0 {
                0.0
            } else {
                2.0 * (f - a).abs() / denom
            }
        })
        .sum();
    Ok(sum / actual.len() as f64)
}

pub fn rmse(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    let mse: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(&a, &f)| (a - f) * (a - f))
        .sum::<f64>()
        / actual.len() as f64;
    Ok(mse.sqrt())
}

/// RMSE divided by the range of the actuals.
pub fn normalized_rmse(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    let r = rmse(actual, forecast)?;
    let (min, max) = min_max(actual);
    if max <= min {
        return Err(MetricError::ZeroRange);
    }
    Ok(r / (max - min))
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Coefficient of determination, population form.
pub fn r2_score(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    if actual.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: actual.len(),
        });
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|&a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let ss_res: f64 = actual
        .iter()
        .zip(forecast)
        .map(|(&a, &f)| (a - f) * (a - f))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `1 - Var(actual - forecast) / Var(actual)`, population variances.
pub fn explained_variance(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    if actual.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: actual.len(),
        });
    }
    let var_a = population_variance(actual);
    if var_a == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    let errors: Vec<f64> = actual.iter().zip(forecast).map(|(&a, &f)| a - f).collect();
    Ok(1.0 - population_variance(&errors) / var_a)
}

/// Average ranks; ties receive the mean of their rank range.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite metric inputs"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // ranks are 1-based; a tie block [i, j] shares the mean rank
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of the average-ranked data.
pub fn spearman(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricError> {
    check_lengths(actual, forecast)?;
    if actual.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: actual.len(),
        });
    }
    let distinct = |xs: &[f64]| xs.iter().any(|&x| x != xs[0]);
    if !distinct(actual) {
        return Err(MetricError::DegenerateRanks("actual"));
    }
    if !distinct(forecast) {
        return Err(MetricError::DegenerateRanks("forecast"));
    }
    let ra = average_ranks(actual);
    let rf = average_ranks(forecast);
    Ok(pearson(&ra, &rf))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    // single sqrt keeps perfectly correlated inputs at exactly +/-1
    cov / (va * vb).sqrt()
}

/// One metric value, or the reason it is undefined on this input.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Metric {
    Value(f64),
    Undefined { undefined: String },
}

impl Metric {
    fn from_result(r: Result<f64, MetricError>) -> Metric {
        match r {
            Ok(v) => Metric::Value(v),
            Err(e) => Metric::Undefined {
                undefined: e.to_string(),
            },
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined { .. } => None,
        }
    }

    /// CSV cell: the number, or empty for undefined (the reason stays in the
    /// JSON form).
    pub fn csv_cell(&self) -> String {
        match self {
            Metric::Value(v) => format!("{v}"),
            Metric::Undefined { .. } => String::new(),
        }
    }
}

/// The six-metric evaluation of one (actual, forecast) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub smape: Metric,
    pub explained_variance: Metric,
    pub rmse: Metric,
    pub normalized_rmse: Metric,
    pub r2: Metric,
    pub spearman: Metric,
    pub n: usize,
}

/// Compute all six metrics on one aligned pair. Metrics that are undefined on
/// this input are reported with their reason, never skipped.
pub fn evaluate(actual: &[f64], forecast: &[f64]) -> Result<MetricReport, MetricError> {
    check_lengths(actual, forecast)?;
    Ok(MetricReport {
        smape: Metric::from_result(smape(actual, forecast)),
        explained_variance: Metric::from_result(explained_variance(actual, forecast)),
        rmse: Metric::from_result(rmse(actual, forecast)),
        normalized_rmse: Metric::from_result(normalized_rmse(actual, forecast)),
        r2: Metric::from_result(r2_score(actual, forecast)),
        spearman: Metric::from_result(spearman(actual, forecast)),
        n: actual.len(),
    })
}

/// One row of a Tables-I/II-style comparison.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub model: String,
    pub dataset: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

pub const REPORT_HEADER: [&str; 9] = [
    "model",
    "dataset",
    "smape",
    "explained_variance",
    "rmse",
    "normalized_rmse",
    "r2",
    "spearman",
    "n",
];

pub fn write_report_csv(
    writer: impl std::io::Write,
    rows: &[MetricRow],
) -> Result<(), std::io::Error> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(REPORT_HEADER)?;
    for row in rows {
        csv.write_record([
            row.model.clone(),
            row.dataset.clone(),
            row.report.smape.csv_cell(),
            row.report.explained_variance.csv_cell(),
            row.report.rmse.csv_cell(),
            row.report.normalized_rmse.csv_cell(),
            row.report.r2.csv_cell(),
            row.report.spearman.csv_cell(),
            row.report.n.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
