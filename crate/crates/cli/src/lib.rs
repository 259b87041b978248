//! Experiment runner for the pre-scored attention library: declarative TOML
//! configs in, `results.csv` plus `summary.json` out.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::run_experiment;
pub use report::{csv_body_of_file, write_reports, RunOutput};
