//! Experiment configuration, seeded trial runner, trace monitor, result
//! records and interleaving explorer.

mod config;
mod explore;
pub mod monitor;
mod record;
mod runner;

pub use config::{ConfigError, ExperimentConfig, InputMode, Placement};
pub use explore::{explore, ExploreLimits, ExploreReport};
pub use monitor::{monitor_trace, Lemma, MonitorReport, Violation};
pub use record::{read_results, write_results, ResultLine, RunRecord, Spread, Summary, RESULTS_SCHEMA};
pub use runner::{build_world, run_experiment, run_trial, trace_header, trial_inputs, Experiment, TrialOutput};
