//! Regression models: robust GLMs fitted by variational EM and the standard
//! baselines they are compared against.

mod dataset;
mod irls;
mod negbin;
mod predict;
mod robust;
mod student_t;

pub use dataset::RegressionDataset;
pub use irls::{fit_standard_glm, glm_loglik, GlmModel, IrlsConfig, SEPARATION_NORM};
pub use negbin::{
    fit_negative_binomial, negbin_loglik, negbin_logpmf, NegBinConfig, NegBinRegressionModel, R_CAP,
};
pub use predict::{Prediction, Predictive};
pub use robust::{
    fit_robust_glm, glm_elbo, mstep_objective, mstep_objective_grad, mstep_update, RobustGlmConfig,
    RobustGlmModel, ELBO_DROP_TOL, LAMBDA2_FLOOR,
};
pub use student_t::{
    fit_student_t_regression, precision_weights, student_t_loglik, StudentTConfig,
    StudentTRegressionModel,
};

/// Families a GLM can be fitted with.
pub(crate) fn check_glm_family(family: crate::Family) -> crate::Result<()> {
    family.validate()?;
    match family {
        crate::Family::Categorical { .. } => Err(crate::Error::param(
            family.name(),
            "not a GLM response family",
        )),
        _ => Ok(()),
    }
}
