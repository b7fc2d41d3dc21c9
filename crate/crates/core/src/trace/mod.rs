//! Ingestion of Azure-Functions-style invocation logs: parse per-day CSV
//! files, filter by trigger, merge days into per-function minute series, and
//! derive hourly and inter-arrival-gap views.

pub mod io;

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MINUTES_PER_DAY: usize = 1440;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("bad count at row {row}, column {column}: {value:?}")]
    BadCount {
        row: usize,
        column: String,
        value: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("function {function_id} appears twice in day {day}")]
    DuplicateFunctionInDay { function_id: String, day: usize },
    #[error("series length {len} not divisible by 60")]
    LengthNotDivisible { len: usize },
    #[error("gap series needs at least 2 nonzero minutes, found {found}")]
    TooFewEvents { found: usize },
    #[error("operation requires {expected:?} granularity, series is {actual:?}")]
    WrongGranularity {
        expected: Granularity,
        actual: Granularity,
    },
    #[error("series of length {len} too short for context {context} + horizon {horizon}")]
    SeriesTooShort {
        len: usize,
        context: usize,
        horizon: usize,
    },
}

/// Trigger of an Azure Functions invocation row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    Http,
    Timer,
    Event,
    Queue,
    Storage,
    Orchestration,
    Others,
}

impl Trigger {
    /// The public trace uses exactly these lowercase names; anything else is
    /// bucketed with `others`, matching the dataset's own catch-all.
    fn parse(s: &str) -> Trigger {
        match s {
            "http" => Trigger::Http,
            "timer" => Trigger::Timer,
            "event" => Trigger::Event,
            "queue" => Trigger::Queue,
            "storage" => Trigger::Storage,
            "orchestration" => Trigger::Orchestration,
            _ => Trigger::Others,
        }
    }
}

/// One function-day of the trace: identity hashes, trigger, and 1440 per-minute
/// invocation counts.
#[derive(Debug, Clone)]
pub struct RawTraceRow {
    pub owner_hash: String,
    pub app_hash: String,
    pub function_hash: String,
    pub trigger: Trigger,
    pub minute_counts: Vec<u64>,
}

impl RawTraceRow {
    pub fn function_id(&self) -> String {
        format!("{}-{}-{}", self.owner_hash, self.app_hash, self.function_hash)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Minute,
    Hour,
}

impl Granularity {
    pub fn step(&self) -> Duration {
        match self {
            Granularity::Minute => Duration::minutes(1),
            Granularity::Hour => Duration::hours(1),
        }
    }
}

/// One function's invocation counts over uniform time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationSeries {
    #[serde(rename = "functionId")]
    pub function_id: String,
    pub granularity: Granularity,
    #[serde(rename = "startTime")]
    pub start_time: DateTime<Utc>,
    pub values: Vec<u64>,
}

impl InvocationSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    /// Timestamp of step `index`.
    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.start_time + self.granularity.step() * index as i32
    }
}

/// Minutes between consecutive invocation events of one function. Multiple
/// invocations within a minute collapse to a single event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    #[serde(rename = "functionId")]
    pub function_id: String,
    pub gaps: Vec<u64>,
    #[serde(rename = "firstEventTime")]
    pub first_event_time: DateTime<Utc>,
}

impl GapSeries {
    /// Minute indices of the events, relative to the owning series start.
    pub fn event_minutes(&self, first_event_minute: u64) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.gaps.len() + 1);
        let mut t = first_event_minute;
        out.push(t);
        for &g in &self.gaps {
            t += g;
            out.push(t);
        }
        out
    }
}

const ID_COLUMNS: [&str; 4] = ["HashOwner", "HashApp", "HashFunction", "Trigger"];

/// Parse one day file of the public Azure 2019 invocation trace.
///
/// Expects a header of `HashOwner,HashApp,HashFunction,Trigger` followed by
/// minute columns named `"1"` through `"1440"`. Any unparseable or negative
/// count is an error, never a silent zero.
pub fn parse_day_file(reader: impl Read) -> Result<Vec<RawTraceRow>, TraceError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv.headers()?;
        if headers.len() != ID_COLUMNS.len() + MINUTES_PER_DAY {
            return Err(TraceError::MalformedHeader(format!(
                "expected {} columns, found {}",
                ID_COLUMNS.len() + MINUTES_PER_DAY,
                headers.len()
            )));
        }
        for (i, want) in ID_COLUMNS.iter().enumerate() {
            if &headers[i] != *want {
                return Err(TraceError::MalformedHeader(format!(
                    "column {} is {:?}, expected {:?}",
                    i, &headers[i], want
                )));
            }
        }
        for minute in 1..=MINUTES_PER_DAY {
            let got = &headers[ID_COLUMNS.len() + minute - 1];
            if got != minute.to_string() {
                return Err(TraceError::MalformedHeader(format!(
                    "minute column {} is named {:?}",
                    minute, got
                )));
            }
        }
    }

    let mut rows = Vec::new();
    for (row_idx, record) in csv.records().enumerate() {
        let record = record?;
        let mut minute_counts = Vec::with_capacity(MINUTES_PER_DAY);
        for minute in 1..=MINUTES_PER_DAY {
            let cell = &record[ID_COLUMNS.len() + minute - 1];
            let parsed = cell.trim().parse::<u64>().map_err(|_| TraceError::BadCount {
                row: row_idx + 1,
                column: minute.to_string(),
                value: cell.to_string(),
            })?;
            minute_counts.push(parsed);
        }
        rows.push(RawTraceRow {
            owner_hash: record[0].to_string(),
            app_hash: record[1].to_string(),
            function_hash: record[2].to_string(),
            trigger: Trigger::parse(&record[3]),
            minute_counts,
        });
    }
    Ok(rows)
}

/// Keep only HTTP-triggered rows, order preserved. Idempotent.
pub fn filter_http(rows: Vec<RawTraceRow>) -> Vec<RawTraceRow> {
    rows.into_iter()
        .filter(|r| r.trigger == Trigger::Http)
        .collect()
}

/// Concatenate per-day tables into per-function minute series starting at
/// `start_time`. A function absent on a day contributes 1440 zeros for that
/// day, so every series spans `tables.len() * 1440` minutes.
pub fn merge_days(
    tables: &[Vec<RawTraceRow>],
    start_time: DateTime<Utc>,
) -> Result<BTreeMap<String, InvocationSeries>, TraceError> {
    let num_days = tables.len();
    let mut merged: BTreeMap<String, InvocationSeries> = BTreeMap::new();
    for (day, table) in tables.iter().enumerate() {
        let mut seen_today = std::collections::BTreeSet::new();
        for row in table {
            let id = row.function_id();
            if !seen_today.insert(id.clone()) {
                return Err(TraceError::DuplicateFunctionInDay {
                    function_id: id,
                    day: day + 1,
                });
            }
            let series = merged.entry(id.clone()).or_insert_with(|| InvocationSeries {
                function_id: id.clone(),
                granularity: Granularity::Minute,
                start_time,
                values: vec![0; num_days * MINUTES_PER_DAY],
            });
            series.values[day * MINUTES_PER_DAY..(day + 1) * MINUTES_PER_DAY]
                .copy_from_slice(&row.minute_counts);
        }
    }
    Ok(merged)
}

/// Sum each 60-minute block into one hourly step; totals are preserved.
pub fn resample_to_hour(series: &InvocationSeries) -> Result<InvocationSeries, TraceError> {
    if series.granularity != Granularity::Minute {
        return Err(TraceError::WrongGranularity {
            expected: Granularity::Minute,
            actual: series.granularity,
        });
    }
    if series.len() % 60 != 0 {
        return Err(TraceError::LengthNotDivisible { len: series.len() });
    }
    let values = series
        .values
        .chunks_exact(60)
        .map(|chunk| chunk.iter().sum())
        .collect();
    Ok(InvocationSeries {
        function_id: series.function_id.clone(),
        granularity: Granularity::Hour,
        start_time: series.start_time,
        values,
    })
}

/// Inter-arrival gaps between nonzero minutes of a minute series.
pub fn to_gap_series(series: &InvocationSeries) -> Result<GapSeries, TraceError> {
    if series.granularity != Granularity::Minute {
        return Err(TraceError::WrongGranularity {
            expected: Granularity::Minute,
            actual: series.granularity,
        });
    }
    let events: Vec<u64> = series
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0)
        .map(|(i, _)| i as u64)
        .collect();
    if events.len() < 2 {
        return Err(TraceError::TooFewEvents { found: events.len() });
    }
    let gaps = events.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(GapSeries {
        function_id: series.function_id.clone(),
        gaps,
        first_event_time: series.time_at(events[0] as usize),
    })
}

/// One training window: `context_len` steps of context followed by `horizon`
/// target steps, starting at `start` in the owning value slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub context_len: usize,
    pub horizon: usize,
}

impl Window {
    /// First target step, i.e. the forecast origin.
    pub fn t0(&self) -> usize {
        self.start + self.context_len
    }

    pub fn context<'a, T>(&self, values: &'a [T]) -> &'a [T] {
        &values[self.start..self.t0()]
    }

    pub fn target<'a, T>(&self, values: &'a [T]) -> &'a [T] {
        &values[self.t0()..self.t0() + self.horizon]
    }
}

/// Sliding context/target windows at the given stride. The final window always
/// ends at the series end, even when the stride does not divide evenly.
pub fn split_series(
    len: usize,
    context_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<Window>, TraceError> {
    assert!(stride > 0, "stride must be positive");
    let need = context_len + horizon;
    if len < need {
        return Err(TraceError::SeriesTooShort {
            len,
            context: context_len,
            horizon,
        });
    }
    let last_start = len - need;
    let mut windows = Vec::new();
    let mut start = 0;
    while start <= last_start {
        windows.push(Window {
            start,
            context_len,
            horizon,
        });
        start += stride;
    }
    if windows.last().map(|w| w.start) != Some(last_start) {
        windows.push(Window {
            start: last_start,
            context_len,
            horizon,
        });
    }
    Ok(windows)
}
