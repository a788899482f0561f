//! Experiment harness around `saddlenet-core`: flat config files, trace
//! CSV/JSONL serialization, and multi-seed execution.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ConfigError, ConfigResult, ExperimentConfig};
pub use output::{parse_trace_csv, trace_to_csv, write_trace_csv, RunSummary, CSV_HEADER};
pub use runner::{execute, ExecutionReport};
