//! Metrics, experiment configuration and orchestration.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{preset, ExperimentConfig, PRESETS};
pub use experiment::{
    evaluate_variant, phases_for, references, run_experiment, torus_basis, train_variant, write_metrics_csv,
    write_plot_csv, ExperimentReport, MetricRow, References, RunDirs, VariantResult, METRIC_HEADER, TORUS_RADII,
};
pub use metrics::{
    error_vs_time, generalization_eval, heat_test_set, mse_metric, spectral_test_set, stability_metric,
    uniform_times, Reference, TestSet,
};
