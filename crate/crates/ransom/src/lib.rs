//! Experiment harness for randomized second-order momentum: dataset IO, JSON
//! run configs, the metrics CSV schema, and the runner behind the `ransom`
//! binary. The algorithms themselves live in `ransom-core`.

pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
pub use harness::{rate_suite, run_experiment, ExperimentReport, RateReport, Summary};
pub use metrics::{fit_rate_slope, MetricsRow, SlopeFit};
pub use ransom_core as core;
