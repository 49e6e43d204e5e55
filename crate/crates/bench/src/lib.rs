//! Experiment harness for Gromov-Wasserstein distances between spheres.

pub mod config;
pub mod experiments;
pub mod output;
pub mod pipeline;

pub use config::{Dims, Experiment, ExperimentConfig, Sampler, SolverKind, Weights, SEED_ENV};
pub use experiments::{run_convergence, run_heatmap, run_tables, summarize, GroupSummary, TableRow};
pub use pipeline::{run_trial, ResultRow, TrialKey, TrialSpec};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] gw_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
