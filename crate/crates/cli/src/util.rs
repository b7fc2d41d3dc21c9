//! Shared plumbing: error classification, series file loading, and
//! deterministic writers.

use std::fs;
use std::path::Path;

use coldstart_core::forecaster::ForecastError;
use coldstart_core::trace::io::SeriesIoError;
use coldstart_core::trace::{InvocationSeries, TraceError};

/// Errors mapped onto the exit-code contract: `Input` exits 2, `Numeric`
/// exits 3.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> CliError {
        CliError::Input(message.into())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<SeriesIoError> for CliError {
    fn from(e: SeriesIoError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<coldstart_core::clustering::ClusterError> for CliError {
    fn from(e: coldstart_core::clustering::ClusterError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<coldstart_core::policy::PolicyError> for CliError {
    fn from(e: coldstart_core::policy::PolicyError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<coldstart_core::simulator::SimError> for CliError {
    fn from(e: coldstart_core::simulator::SimError) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> CliError {
        match e {
            ForecastError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::Input(e.to_string())
    }
}

/// Read a canonical series file; `.json` selects the JSON form, anything else
/// parses as CSV.
pub fn read_series_file(path: &Path) -> Result<Vec<InvocationSeries>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    let series = if path.extension().is_some_and(|ext| ext == "json") {
        coldstart_core::trace::io::read_series_json(file)?
    } else {
        coldstart_core::trace::io::read_series_csv(file)?
    };
    Ok(series)
}

/// Pick one function out of a series file: by exact id, or the first (sorted
/// by id) when `wanted` is empty.
pub fn pick_function(
    series: Vec<InvocationSeries>,
    wanted: &str,
) -> Result<InvocationSeries, CliError> {
    if series.is_empty() {
        return Err(CliError::input("series file holds no functions"));
    }
    if wanted.is_empty() {
        let mut sorted = series;
        sorted.sort_by(|a, b| a.function_id.cmp(&b.function_id));
        return Ok(sorted.into_iter().next().expect("non-empty"));
    }
    series
        .into_iter()
        .find(|s| s.function_id == wanted)
        .ok_or_else(|| CliError::input(format!("function {wanted:?} not in series file")))
}

pub fn write_json_pretty(
    path: &Path,
    value: &impl serde::Serialize,
) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

pub fn parse_start_date(text: &str) -> Result<chrono::DateTime<chrono::Utc>, CliError> {
    // accept a bare date or a full RFC 3339 timestamp
    if let Ok(t) = chrono::DateTime::parse_from_rfc3339(text) {
        return Ok(t.with_timezone(&chrono::Utc));
    }
    let date = chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .map_err(|e| CliError::input(format!("bad date {text:?}: {e}")))?;
    Ok(chrono::DateTime::from_naive_utc_and_offset(
        date.and_hms_opt(0, 0, 0).expect("midnight exists"),
        chrono::Utc,
    ))
}

/// Invocation events (minute indices, with multiplicity) of a minute series.
pub fn events_with_multiplicity(series: &InvocationSeries) -> Vec<u64> {
    let mut events = Vec::new();
    for (minute, &count) in series.values.iter().enumerate() {
        for _ in 0..count {
            events.push(minute as u64);
        }
    }
    events
}
