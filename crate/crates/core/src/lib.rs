//! Trace-driven forecasting and cold-start mitigation for FaaS platforms.
//!
//! The pipeline: ingest per-day invocation logs into per-function time series
//! ([`trace`]), group invocation patterns with DBSCAN ([`clustering`]), train a
//! probabilistic time-series Transformer or a recurrent baseline on counts or
//! inter-arrival gaps ([`forecaster`], built on the autodiff kernel in
//! [`tensor`]), score forecasts ([`metrics`]), turn them into prewarm pools
//! and adaptive idle windows ([`policy`]), and replay traces under those
//! policies in a deterministic container-lifecycle simulator ([`simulator`]).

pub mod clustering;
pub mod forecaster;
pub mod metrics;
pub mod policy;
pub mod simulator;
pub mod synth;
pub mod tensor;
pub mod trace;

pub use tensor::{Tape, Tensor, TensorError, Var};
pub use trace::{GapSeries, Granularity, InvocationSeries, RawTraceRow, Trigger};
