//! Experiment orchestration: configs, parallel repetitions and result files.

pub mod config;
pub mod emit;
pub mod experiment;

pub use config::{ConfigFile, DesignKind, EstimatorSpec, ExperimentConfig, ResolvedEstimator};
pub use emit::{emit, OutputFormat};
pub use experiment::{run_experiment, sensitivity_sweep, ExperimentResult, ResultRow, Sweep};
