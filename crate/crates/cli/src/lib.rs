//! Command-line pipeline: ingest raw files, train, evaluate, and run analyses,
//! all driven by one TOML [`RunConfig`].

pub mod commands;
pub mod config;

pub use commands::{
    cmd_analyze, cmd_evaluate, cmd_ingest, cmd_synth, cmd_train, AnalyzeCommand, Bundle, EpochRow, EvalSplit, IngestSummary,
    TrainOutcome,
};
pub use config::{PrgMode, RunConfig};
