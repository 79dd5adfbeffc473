use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, ModelKind, SimData, SimSpec};
use super::metrics::{compute_metrics, Evaluation, Metric};
use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::glm::{
    fit_negative_binomial, fit_robust_glm, fit_standard_glm, fit_student_t_regression, GlmModel,
    IrlsConfig, NegBinConfig, NegBinRegressionModel, Prediction, Predictive, RegressionDataset,
    RobustGlmConfig, RobustGlmModel, StudentTConfig, StudentTRegressionModel,
};

/// Models compared in the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    /// Student-t regression, the localized-variance linear model.
    RobustLinear,
    Ols,
    RobustLogistic,
    Logistic,
    RobustPoisson,
    Poisson,
    #[serde(rename = "nb")]
    NegBin,
}

impl SimModel {
    pub const ALL: [SimModel; 7] = [
        SimModel::RobustLinear,
        SimModel::Ols,
        SimModel::RobustLogistic,
        SimModel::Logistic,
        SimModel::RobustPoisson,
        SimModel::Poisson,
        SimModel::NegBin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimModel::RobustLinear => "robust_linear",
            SimModel::Ols => "ols",
            SimModel::RobustLogistic => "robust_logistic",
            SimModel::Logistic => "logistic",
            SimModel::RobustPoisson => "robust_poisson",
            SimModel::Poisson => "poisson",
            SimModel::NegBin => "nb",
        }
    }

    pub fn parse(name: &str) -> Option<SimModel> {
        SimModel::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn kind(self) -> ModelKind {
        match self {
            SimModel::RobustLinear | SimModel::Ols => ModelKind::Linear,
            SimModel::RobustLogistic | SimModel::Logistic => ModelKind::Logistic,
            SimModel::RobustPoisson | SimModel::Poisson | SimModel::NegBin => ModelKind::Poisson,
        }
    }

    /// The robust model and its baselines for a data kind.
    pub fn for_kind(kind: ModelKind) -> Vec<SimModel> {
        SimModel::ALL
            .into_iter()
            .filter(|m| m.kind() == kind)
            .collect()
    }
}

impl fmt::Display for SimModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Convergence controls shared by every fitter; `None` keeps each fitter's
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// Append a constant covariate (last coefficient) before fitting.
    pub intercept: bool,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            intercept: true,
            tol: None,
            max_iters: None,
        }
    }
}

impl FitSettings {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::param(
                    "fit",
                    format!("tolerance must be positive, got {t}"),
                ));
            }
        }
        if self.max_iters == Some(0) {
            return Err(Error::param("fit", "max iterations must be positive"));
        }
        Ok(())
    }

    fn irls(&self) -> IrlsConfig {
        let d = IrlsConfig::default();
        IrlsConfig {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
        }
    }
}

/// A fitted model of any supported type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedModel {
    Glm(GlmModel),
    RobustGlm(RobustGlmModel),
    NegativeBinomial(NegBinRegressionModel),
    StudentT(StudentTRegressionModel),
}

impl FittedModel {
    pub fn coefficients(&self) -> &[f64] {
        match self {
            FittedModel::Glm(m) => &m.w,
            FittedModel::RobustGlm(m) => &m.w,
            FittedModel::NegativeBinomial(m) => &m.w,
            FittedModel::StudentT(m) => &m.w,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            FittedModel::Glm(m) => m.converged,
            FittedModel::RobustGlm(m) => m.converged,
            FittedModel::NegativeBinomial(m) => m.converged,
            FittedModel::StudentT(m) => m.converged,
        }
    }

    /// The response family the model scores: Gaussian for the linear models.
    pub fn response_kind(&self) -> ModelKind {
        match self {
            FittedModel::Glm(GlmModel { family, .. })
            | FittedModel::RobustGlm(RobustGlmModel { family, .. }) => match family {
                Family::Bernoulli => ModelKind::Logistic,
                Family::Poisson => ModelKind::Poisson,
                _ => ModelKind::Linear,
            },
            FittedModel::NegativeBinomial(_) => ModelKind::Poisson,
            FittedModel::StudentT(_) => ModelKind::Linear,
        }
    }

    fn inner(&self) -> &dyn Predictive {
        match self {
            FittedModel::Glm(m) => m,
            FittedModel::RobustGlm(m) => m,
            FittedModel::NegativeBinomial(m) => m,
            FittedModel::StudentT(m) => m,
        }
    }
}

impl Predictive for FittedModel {
    fn dimension(&self) -> usize {
        self.inner().dimension()
    }

    fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        self.inner().predict_unchecked(x)
    }

    fn predictive_logpdf_unchecked(&self, x: &[f64], y: f64) -> f64 {
        self.inner().predictive_logpdf_unchecked(x, y)
    }
}

/// Fits `model` to `data` as given; see [`FitSettings::intercept`] for the
/// design used in simulations.
pub fn fit_model(
    model: SimModel,
    data: &RegressionDataset,
    settings: &FitSettings,
) -> Result<FittedModel> {
    settings.validate()?;
    let irls = settings.irls();
    let robust = || {
        let d = RobustGlmConfig::default();
        RobustGlmConfig {
            tol: settings.tol.unwrap_or(d.tol),
            max_iters: settings.max_iters.unwrap_or(d.max_iters),
            irls,
            ..d
        }
    };
    Ok(match model {
        SimModel::RobustLinear => {
            let d = StudentTConfig::default();
            let config = StudentTConfig {
                tol: settings.tol.unwrap_or(d.tol),
                max_iters: settings.max_iters.unwrap_or(d.max_iters),
            };
            FittedModel::StudentT(fit_student_t_regression(data, &config)?)
        }
        SimModel::Ols => FittedModel::Glm(fit_standard_glm(data, Family::gaussian(1.0), &irls)?),
        SimModel::Logistic => FittedModel::Glm(fit_standard_glm(data, Family::Bernoulli, &irls)?),
        SimModel::Poisson => FittedModel::Glm(fit_standard_glm(data, Family::Poisson, &irls)?),
        SimModel::RobustLogistic => {
            FittedModel::RobustGlm(fit_robust_glm(data, Family::Bernoulli, &robust())?)
        }
        SimModel::RobustPoisson => {
            FittedModel::RobustGlm(fit_robust_glm(data, Family::Poisson, &robust())?)
        }
        SimModel::NegBin => {
            let d = NegBinConfig::default();
            let config = NegBinConfig {
                tol: settings.tol.unwrap_or(d.tol),
                max_iters: settings.max_iters.unwrap_or(d.max_iters),
                irls,
            };
            FittedModel::NegativeBinomial(fit_negative_binomial(data, &config)?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    /// The fit failed; the record carries no value.
    Failed,
    /// The metric's denominator vanished on this test set.
    Undefined,
}

impl RunStatus {
    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
            RunStatus::Undefined => "undefined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub run_id: usize,
    pub model: String,
    pub noise_level: f64,
    pub metric: Metric,
    pub value: Option<f64>,
    pub seed: u64,
    pub status: RunStatus,
}

/// Per-repetition diagnostics that are not metrics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RepReport {
    pub records: Vec<MetricRecord>,
    /// `(model, message)` for every failed fit.
    pub failures: Vec<(String, String)>,
    pub redraws: usize,
}

/// Evaluates a fitted model on the clean test set of `data`.
pub fn evaluate_model(
    kind: ModelKind,
    fitted: &FittedModel,
    data: &SimData,
    intercept: bool,
) -> Result<Vec<(Metric, Option<f64>)>> {
    let test = if intercept {
        data.test.with_intercept()
    } else {
        data.test.clone()
    };
    let rows: Vec<Vec<f64>> = (0..test.n()).map(|i| test.row(i)).collect();
    let yhat: Vec<f64> = rows
        .iter()
        .map(|x| fitted.predict(x).map(|p| p.point))
        .collect::<Result<_>>()?;
    let logps: Vec<f64> = rows
        .iter()
        .zip(&test.y)
        .map(|(x, &y)| fitted.predictive_logpdf(x, y))
        .collect::<Result<_>>()?;
    let d = data.w_true.len();
    let eval = Evaluation {
        y: &test.y,
        yhat: &yhat,
        logps: &logps,
        w_true: &data.w_true,
        w_hat: &fitted.coefficients()[..d],
    };
    compute_metrics(kind, &eval)
}

/// Generates repetition `rep`, fits every model and scores it. Fit
/// failures become `failed` records instead of errors.
pub fn run_rep(
    spec: &SimSpec,
    rep: usize,
    models: &[SimModel],
    settings: &FitSettings,
) -> Result<RepReport> {
    if let Some(m) = models.iter().find(|m| m.kind() != spec.kind) {
        return Err(Error::param(
            "sim",
            format!("model {m} does not apply to {} data", spec.kind.name()),
        ));
    }
    let data = generate(spec, rep)?;
    let train = if settings.intercept {
        data.train.with_intercept()
    } else {
        data.train.clone()
    };
    let seed = spec.rep_seed(rep);
    let mut report = RepReport {
        redraws: data.redraws,
        ..RepReport::default()
    };
    for &model in models {
        let record = |metric, value: Option<f64>, status| MetricRecord {
            run_id: rep,
            model: model.name().to_string(),
            noise_level: spec.noise_level,
            metric,
            value,
            seed,
            status,
        };
        match fit_model(model, &train, settings)
            .and_then(|f| evaluate_model(spec.kind, &f, &data, settings.intercept))
        {
            Ok(values) => {
                report
                    .records
                    .extend(values.into_iter().map(|(metric, value)| match value {
                        Some(v) if v.is_finite() => record(metric, Some(v), RunStatus::Ok),
                        Some(_) => record(metric, None, RunStatus::Failed),
                        None => record(metric, None, RunStatus::Undefined),
                    }))
            }
            Err(e) => {
                report
                    .failures
                    .push((model.name().to_string(), e.to_string()));
                report.records.extend(
                    Metric::for_kind(spec.kind)
                        .into_iter()
                        .map(|m| record(m, None, RunStatus::Failed)),
                );
            }
        }
    }
    Ok(report)
}

/// Runs every `(noise level, rep)` cell in parallel and returns the records
/// sorted by `(noise_level, model, run_id, metric)`.
pub fn run_grid(
    base: &SimSpec,
    grid: &[f64],
    models: &[SimModel],
    settings: &FitSettings,
) -> Result<(Vec<MetricRecord>, Vec<RepReport>)> {
    let cells: Vec<(f64, usize)> = grid
        .iter()
        .flat_map(|&level| (0..base.reps).map(move |rep| (level, rep)))
        .collect();
    for &level in grid {
        SimSpec {
            noise_level: level,
            ..*base
        }
        .validate()?;
    }
    let reports: Vec<RepReport> = cells
        .par_iter()
        .map(|&(level, rep)| {
            run_rep(
                &SimSpec {
                    noise_level: level,
                    ..*base
                },
                rep,
                models,
                settings,
            )
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<MetricRecord> = reports
        .iter()
        .flat_map(|r| r.records.iter().cloned())
        .collect();
    sort_records(&mut records);
    Ok((records, reports))
}

pub fn sort_records(records: &mut [MetricRecord]) {
    records.sort_by(|a, b| {
        a.noise_level
            .total_cmp(&b.noise_level)
            .then_with(|| a.model.cmp(&b.model))
            .then(a.run_id.cmp(&b.run_id))
            .then(a.metric.cmp(&b.metric))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_count_and_order() {
        let spec = SimSpec {
            reps: 2,
            ..SimSpec::new(ModelKind::Linear, 0.0, 1)
        };
        let models = SimModel::for_kind(ModelKind::Linear);
        let (records, _) = run_grid(&spec, &[0.0], &models, &FitSettings::default()).unwrap();
        assert_eq!(records.len(), 12);
        assert!(records.iter().all(|r| r.status == RunStatus::Ok));
        assert_eq!(records[0].model, "ols");
        assert_eq!(records.last().unwrap().model, "robust_linear");
    }

    #[test]
    fn noiseless_linear_fit_recovers_truth() {
        let spec = SimSpec::new(ModelKind::Linear, 0.0, 2);
        let report = run_rep(&spec, 0, &[SimModel::Ols], &FitSettings::default()).unwrap();
        let mse = report
            .records
            .iter()
            .find(|r| r.metric == Metric::ParamMse)
            .unwrap()
            .value
            .unwrap();
        assert!(mse < 1e-5, "{mse}");
        let pl1 = report
            .records
            .iter()
            .find(|r| r.metric == Metric::NegPL1)
            .unwrap()
            .value
            .unwrap();
        assert!(pl1 < -0.99, "{pl1}");
    }

    #[test]
    fn failures_are_recorded() {
        let spec = SimSpec::new(ModelKind::Poisson, 0.5, 3);
        let settings = FitSettings {
            tol: Some(-1.0),
            ..FitSettings::default()
        };
        let report = run_rep(&spec, 0, &[SimModel::Poisson], &settings).unwrap();
        assert_eq!(report.failures.len(), 1);
        assert!(report
            .records
            .iter()
            .all(|r| r.status == RunStatus::Failed && r.value.is_none()));
        assert!(run_rep(&spec, 0, &[SimModel::Ols], &FitSettings::default()).is_err());
    }

    #[test]
    fn fitted_model_json_round_trip() {
        let data = generate(&SimSpec::new(ModelKind::Poisson, 0.5, 4), 0).unwrap();
        let train = data.train.with_intercept();
        for model in SimModel::for_kind(ModelKind::Poisson) {
            let fitted = fit_model(model, &train, &FitSettings::default()).unwrap();
            let back: FittedModel =
                serde_json::from_str(&serde_json::to_string(&fitted).unwrap()).unwrap();
            let x = train.row(3);
            assert_eq!(fitted.predict(&x).unwrap(), back.predict(&x).unwrap());
            assert_eq!(
                fitted.predictive_logpdf(&x, 2.0).unwrap(),
                back.predictive_logpdf(&x, 2.0).unwrap()
            );
        }
    }
}
