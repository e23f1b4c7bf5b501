//! Configuration, experiment orchestration and report emission.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{parse_config, parse_config_str, ConfigError, Experiment, ExperimentConfig, ReportFormat, Settings};
pub use experiments::{run_experiment, run_with_threads, ExperimentError};
pub use report::{emit_report, Quantity, Relation, Report};
