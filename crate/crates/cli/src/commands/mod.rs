pub mod cluster;
pub mod evaluate;
pub mod forecast;
pub mod ingest;
pub mod run;
pub mod simulate;
pub mod synth;
pub mod train;
