//! Canonical on-disk series formats.
//!
//! CSV: header `functionId,granularity,startTime,v0..vN`, one series per row;
//! every series in a file has the same length. JSON: an array of
//! `{functionId, granularity, startTime, values}` objects. Both carry RFC 3339
//! start times.

use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use super::{Granularity, InvocationSeries};

#[derive(Debug, Error)]
pub enum SeriesIoError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad series file: {0}")]
    Format(String),
}

fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, SeriesIoError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| SeriesIoError::Format(format!("bad startTime {s:?}: {e}")))
}

fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::Minute => "minute",
        Granularity::Hour => "hour",
    }
}

fn parse_granularity(s: &str) -> Result<Granularity, SeriesIoError> {
    match s {
        "minute" => Ok(Granularity::Minute),
        "hour" => Ok(Granularity::Hour),
        other => Err(SeriesIoError::Format(format!("bad granularity {other:?}"))),
    }
}

pub fn write_series_csv(
    writer: impl Write,
    series: &[InvocationSeries],
) -> Result<(), SeriesIoError> {
    let len = series.first().map_or(0, |s| s.len());
    if let Some(bad) = series.iter().find(|s| s.len() != len) {
        return Err(SeriesIoError::Format(format!(
            "series {} has length {}, file expects {}",
            bad.function_id,
            bad.len(),
            len
        )));
    }
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec![
        "functionId".to_string(),
        "granularity".to_string(),
        "startTime".to_string(),
    ];
    header.extend((0..len).map(|i| format!("v{i}")));
    csv.write_record(&header)?;
    for s in series {
        let mut record = vec![
            s.function_id.clone(),
            granularity_name(s.granularity).to_string(),
            format_time(s.start_time),
        ];
        record.extend(s.values.iter().map(|v| v.to_string()));
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_series_csv(reader: impl Read) -> Result<Vec<InvocationSeries>, SeriesIoError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv.headers()?;
        let fixed = ["functionId", "granularity", "startTime"];
        if headers.len() < fixed.len() {
            return Err(SeriesIoError::Format("missing header columns".into()));
        }
        for (i, want) in fixed.iter().enumerate() {
            if &headers[i] != *want {
                return Err(SeriesIoError::Format(format!(
                    "column {i} is {:?}, expected {want:?}",
                    &headers[i]
                )));
            }
        }
    }
    let mut out = Vec::new();
    for record in csv.records() {
        let record = record?;
        let values = record
            .iter()
            .skip(3)
            .map(|cell| {
                cell.parse::<u64>()
                    .map_err(|_| SeriesIoError::Format(format!("bad count {cell:?}")))
            })
            .collect::<Result<Vec<u64>, _>>()?;
        out.push(InvocationSeries {
            function_id: record[0].to_string(),
            granularity: parse_granularity(&record[1])?,
            start_time: parse_time(&record[2])?,
            values,
        });
    }
    Ok(out)
}

pub fn write_series_json(
    writer: impl Write,
    series: &[InvocationSeries],
) -> Result<(), SeriesIoError> {
    serde_json::to_writer_pretty(writer, series)?;
    Ok(())
}

pub fn read_series_json(reader: impl Read) -> Result<Vec<InvocationSeries>, SeriesIoError> {
    Ok(serde_json::from_reader(reader)?)
}
