//! Experiment driving: metrics files, per-seed runs and parameter reports.

pub mod experiment;
pub mod metrics;
pub mod params;

pub use experiment::{run_experiment, run_seed, RunOptions, SeedSummary, Summary};
pub use metrics::{
    export_metrics, read_metrics, running_success_rate, MetricsRecord, MetricsWriter,
};
pub use params::{report_parameters, ParameterTable};
