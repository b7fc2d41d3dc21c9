//! `coldstart`: trace ingestion, workload clustering, forecaster training,
//! and cold-start policy simulation from one binary.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

mod commands;
mod config;
mod util;

use clap::{Parser, Subcommand};

use util::CliError;

#[derive(Parser)]
#[command(name = "coldstart", version, about = "FaaS invocation forecasting and cold-start mitigation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse day files into canonical per-function series.
    Ingest(commands::ingest::IngestArgs),
    /// Group invocation patterns with DBSCAN and pick representatives.
    Cluster(commands::cluster::ClusterArgs),
    /// Generate synthetic traces in the canonical format.
    Synth(commands::synth::SynthArgs),
    /// Train a forecaster on one function's counts or gaps.
    Train(commands::train::TrainArgs),
    /// Sample a predictive distribution from a trained checkpoint.
    Forecast(commands::forecast::ForecastArgs),
    /// Score forecasts with the six-metric table.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Replay a trace under container-management policies.
    Simulate(commands::simulate::SimulateArgs),
    /// Execute a full experiment from a stored config.
    Run(commands::run::RunArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Cluster(args) => commands::cluster::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Forecast(args) => commands::forecast::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Run(args) => commands::run::run(args),
    };
    match outcome {
        Ok(()) => {}
        Err(CliError::Input(message)) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
        Err(CliError::Numeric(message)) => {
            eprintln!("error: {message}");
            std::process::exit(3);
        }
    }
}
