//! `coldstart synth`: synthetic traces in the canonical series format.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use coldstart_core::synth::{generate, SynthPattern};
use coldstart_core::trace::io::write_series_csv;

use crate::util::{parse_start_date, CliError};

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub pattern: PatternArg,
    /// Series length in minutes.
    #[arg(long, default_value_t = 20160)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// How many series to generate (seeds increment per series).
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value = "synth")]
    pub function_id: String,
    #[arg(long, default_value = "2019-07-15")]
    pub start_date: String,
    /// Period of the periodic pattern, minutes.
    #[arg(long, default_value_t = 15)]
    pub period: u64,
    /// Uniform gap bounds of the sporadic pattern, minutes.
    #[arg(long, default_value_t = 11)]
    pub min_gap: u64,
    #[arg(long, default_value_t = 20)]
    pub max_gap: u64,
    /// Bursty pattern: mean minutes between bursts, mean burst length, mean
    /// per-minute rate inside a burst.
    #[arg(long, default_value_t = 120.0)]
    pub mean_inter_burst: f64,
    #[arg(long, default_value_t = 4.0)]
    pub mean_burst_len: f64,
    #[arg(long, default_value_t = 3.0)]
    pub rate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum PatternArg {
    Periodic,
    Sporadic,
    Bursty,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::input("--count must be at least 1"));
    }
    let pattern = match args.pattern {
        PatternArg::Periodic => SynthPattern::Periodic { period: args.period },
        PatternArg::Sporadic => {
            if args.min_gap < 1 || args.min_gap > args.max_gap {
                return Err(CliError::input(format!(
                    "need 1 <= min_gap <= max_gap, got [{}, {}]",
                    args.min_gap, args.max_gap
                )));
            }
            SynthPattern::Sporadic {
                min_gap: args.min_gap,
                max_gap: args.max_gap,
            }
        }
        PatternArg::Bursty => SynthPattern::Bursty {
            mean_inter_burst: args.mean_inter_burst,
            mean_burst_len: args.mean_burst_len,
            rate: args.rate,
        },
    };
    let start = parse_start_date(&args.start_date)?;
    let series: Vec<_> = (0..args.count)
        .map(|i| {
            let id = if args.count == 1 {
                args.function_id.clone()
            } else {
                format!("{}-{i}", args.function_id)
            };
            generate(&pattern, args.length, args.seed + i as u64, &id, start)
        })
        .collect();
    let file = fs::File::create(&args.out)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", args.out.display())))?;
    write_series_csv(file, &series)?;
    println!("wrote {} series to {}", series.len(), args.out.display());
    Ok(())
}
