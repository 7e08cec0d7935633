//! Experiment runner: configuration, the trial pipeline, logs and reports.

pub mod config;
pub mod log;
pub mod report;
pub mod trial;

pub use config::{Config, TextureMode};
pub use log::{parse_log, parse_log_line, write_log, FrameRecord};
pub use report::{Classification, ExperimentReport, ReportRow, TrialOutcome};
pub use trial::{run_batch, run_experiment, run_trial, train_model, trial_seed, Experiment, Trial, TrialRecord};
