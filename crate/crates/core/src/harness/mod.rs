//! Experiment orchestration and evaluation.

pub mod bias;
pub mod experiment;
pub mod stats;

pub use bias::{bias_sets, BIAS_KINDS};
pub use experiment::{
    build_model_space, resolve_all, run_experiment, BiasRow, ClsPrediction, Experiment, ExperimentConfig, ExperimentError,
    FittedParams, GenPrediction, Metrics, ModelId, ModelRun, Report,
};
pub use stats::{paired_t, pearson_r, per_token_loglik, two_sided_p, StatsError, TTest};
