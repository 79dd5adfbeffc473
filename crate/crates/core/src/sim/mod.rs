//! Simulation study: corrupted training data, clean test data, the models
//! compared on them, and the evaluation metrics.

mod generate;
mod metrics;
mod run;

pub use generate::{
    boundary_indices, gen_linear, gen_logistic, gen_poisson, generate, ModelKind, SimData, SimSpec,
    LINEAR_BASE_SD, MAX_POISSON_RATE,
};
pub use metrics::{
    classification_error, compute_metrics, neg_pred_loglik, param_mse, predictive_l1,
    predictive_r2, Evaluation, Metric,
};
pub use run::{
    evaluate_model, fit_model, run_grid, run_rep, sort_records, FitSettings, FittedModel,
    MetricRecord, RepReport, RunStatus, SimModel,
};
