//! Experiment plumbing: config files, metrics, multi-seed runs and CSV output.

mod config;
mod experiment;
mod metrics;

pub use config::{parse_config, parse_config_str, DatasetSource, ExperimentConfig, Mode, RESOLVED_CONFIG};
pub use experiment::{
    aggregate, global_objective, load_dataset, percentile, run_experiment, run_file_name, run_files, run_seed,
    Aggregate, AggregateRow, BestRow, ExperimentOutput, AGGREGATE_FILE, BEST_FILE,
};
pub use metrics::{
    avg_noise_magnitude, cumulative_epsilon, evaluate_test_error, MetricsRow, RunMetrics, METRICS_COLUMNS,
};
