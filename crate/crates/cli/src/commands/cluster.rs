//! `coldstart cluster`: features -> normalize -> DBSCAN -> representatives.

use std::path::PathBuf;

use clap::Args;
use coldstart_core::clustering::{cluster_report, compute_features, dbscan, minmax_normalize};

use crate::util::{read_series_file, write_json_pretty, CliError};

#[derive(Args)]
pub struct ClusterArgs {
    /// Canonical series file (CSV or JSON).
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long, default_value_t = 0.35)]
    pub eps: f64,
    #[arg(long, default_value_t = 5)]
    pub min_pts: usize,
    /// Output JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: ClusterArgs) -> Result<(), CliError> {
    let mut series = read_series_file(&args.series)?;
    if series.is_empty() {
        return Err(CliError::input("series file holds no functions"));
    }
    series.sort_by(|a, b| a.function_id.cmp(&b.function_id));
    let features = minmax_normalize(
        &series.iter().map(compute_features).collect::<Vec<_>>(),
    );
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.vector.clone()).collect();
    let assignment = dbscan(&points, args.eps, args.min_pts)?;
    let report = cluster_report(&assignment, &features);
    write_json_pretty(&args.out, &report)?;
    println!(
        "{} function(s) -> {} cluster(s), {} noise",
        series.len(),
        report.clusters.len(),
        report.noise.len()
    );
    Ok(())
}
