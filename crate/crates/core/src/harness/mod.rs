//! Experiment configuration, metrics, sweeps and CSV reporting.

pub mod config;
pub mod experiments;
pub mod metrics;

pub use config::{
    ExperimentConfig, ExperimentKind, ExperimentOptions, GenConfig, GenKind, ModelConfig, SweepGrid,
};
pub use experiments::{
    default_tau, derive_seed, finite_difference_residual, identity_residual, median_by,
    run_experiment, run_trials, MetricRow, RESULT_COLUMNS, THREADS_ENV,
};
pub use metrics::{
    adjusted_rand_index, downstream_accuracy, edge_metrics, precision_recall, theory_bound,
    Accuracy,
};
