//! `coldstart ingest`: day files -> canonical per-function series + manifest.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use coldstart_core::trace::{
    filter_http, io::write_series_csv, merge_days, parse_day_file, resample_to_hour, Granularity,
    InvocationSeries,
};
use serde::Serialize;

use crate::util::{create_dir, parse_start_date, write_json_pretty, CliError};

#[derive(Args)]
pub struct IngestArgs {
    /// Day files in calendar order (repeat the flag per file).
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Keep only HTTP-triggered functions.
    #[arg(long)]
    pub http_only: bool,
    #[arg(long, value_enum, default_value = "minute")]
    pub granularity: GranularityArg,
    /// UTC date of the first day file.
    #[arg(long, default_value = "2019-07-15")]
    pub start_date: String,
    /// Output directory for series.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum GranularityArg {
    Minute,
    Hour,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Granularity {
        match g {
            GranularityArg::Minute => Granularity::Minute,
            GranularityArg::Hour => Granularity::Hour,
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    #[serde(rename = "numDays")]
    num_days: usize,
    #[serde(rename = "numFunctions")]
    num_functions: usize,
    granularity: Granularity,
    #[serde(rename = "httpOnly")]
    http_only: bool,
    #[serde(rename = "startTime")]
    start_time: String,
    #[serde(rename = "endTime")]
    end_time: String,
    #[serde(rename = "seriesLength")]
    series_length: usize,
    #[serde(rename = "totalInvocations")]
    total_invocations: u64,
}

pub fn run(args: IngestArgs) -> Result<(), CliError> {
    let start = parse_start_date(&args.start_date)?;
    let mut tables = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let file = fs::File::open(path)
            .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
        let rows = parse_day_file(file).map_err(|e| {
            CliError::input(format!("{}: {e}", path.display()))
        })?;
        tables.push(if args.http_only { filter_http(rows) } else { rows });
    }

    let merged = merge_days(&tables, start)?;
    let mut series: Vec<InvocationSeries> = merged.into_values().collect();
    if matches!(args.granularity, GranularityArg::Hour) {
        series = series
            .iter()
            .map(resample_to_hour)
            .collect::<Result<_, _>>()?;
    }

    create_dir(&args.out)?;
    let csv_path = args.out.join("series.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", csv_path.display())))?;
    write_series_csv(file, &series)?;

    let length = series.first().map_or(0, |s| s.len());
    let granularity: Granularity = args.granularity.into();
    let end = start + granularity.step() * length as i32;
    let manifest = Manifest {
        num_days: tables.len(),
        num_functions: series.len(),
        granularity,
        http_only: args.http_only,
        start_time: start.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        end_time: end.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        series_length: length,
        total_invocations: series.iter().map(|s| s.total()).sum(),
    };
    write_json_pretty(&args.out.join("manifest.json"), &manifest)?;
    println!(
        "ingested {} day file(s): {} function(s), series length {}",
        tables.len(),
        manifest.num_functions,
        length
    );
    Ok(())
}
