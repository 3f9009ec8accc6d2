//! Experiment configuration, replicate statistics and CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod stats;
pub mod tune;
pub mod verify;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use experiment::{emit_csv, exact_context, oracle_table, run_experiment, ExactContext, ExperimentOutput};
pub use output::{Cell, Table};
pub use stats::ReplicateStats;
pub use tune::tune_reports;
pub use verify::{verify_bounds, verify_output, CheckStatus, VerifyReport};

/// Shortest exact-round-trip scientific formatting used in every CSV column.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}
