use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::RegressionDataset;
use super::irls::{fit_standard_glm, IrlsConfig};
use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::laplace::{
    expected_log_normalizer_with_path, laplace_estep, ExpectationPath, LaplaceConfig,
    VariationalGaussian,
};
use crate::linalg::least_squares;

/// Lower clamp on the localization variance `λ²`.
pub const LAMBDA2_FLOOR: f64 = 1e-12;

/// Relative ELBO decrease beyond which an iteration is flagged.
pub const ELBO_DROP_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustGlmConfig {
    /// Relative ELBO change that ends the EM loop.
    pub tol: f64,
    pub max_iters: usize,
    pub laplace: LaplaceConfig,
    pub irls: IrlsConfig,
    /// Holds `λ²` fixed at this value instead of estimating it.
    pub freeze_lambda2: Option<f64>,
}

impl Default for RobustGlmConfig {
    fn default() -> Self {
        RobustGlmConfig {
            tol: 1e-6,
            max_iters: 200,
            laplace: LaplaceConfig::default(),
            irls: IrlsConfig::default(),
            freeze_lambda2: None,
        }
    }
}

/// Robust GLM: `ηᵢ ~ N(wᵀxᵢ, λ²)`, `yᵢ ~ ExpFam(ηᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustGlmModel {
    pub w: Vec<f64>,
    pub lambda2: f64,
    pub family: Family,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `λ²` hit [`LAMBDA2_FLOOR`]; the fit is effectively the standard GLM.
    pub effectively_non_robust: bool,
    /// Some iteration decreased the ELBO by more than [`ELBO_DROP_TOL`].
    pub elbo_drop_flagged: bool,
    /// The initializing standard fit reported separation.
    pub separation: bool,
    pub expectation_path: ExpectationPath,
    /// Final variational factors, one per training point.
    #[serde(skip)]
    pub q: Vec<VariationalGaussian>,
}

/// `Σᵢ E_q[log N(ηᵢ; wᵀxᵢ, λ²)]`.
pub fn mstep_objective(
    q: &[VariationalGaussian],
    x: &DMatrix<f64>,
    w: &[f64],
    lambda2: f64,
) -> f64 {
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * lambda2).ln();
    q.iter()
        .enumerate()
        .map(|(i, qi)| {
            let mu = row_dot(x, i, w);
            log_norm - (qi.v + (qi.m - mu).powi(2)) / (2.0 * lambda2)
        })
        .sum()
}

/// Gradient of [`mstep_objective`] in `(w, log λ²)`; the last entry is the
/// `log λ²` component.
pub fn mstep_objective_grad(
    q: &[VariationalGaussian],
    x: &DMatrix<f64>,
    w: &[f64],
    log_lambda2: f64,
) -> Vec<f64> {
    let lambda2 = log_lambda2.exp();
    let d = w.len();
    let mut grad = vec![0.0; d + 1];
    for (i, qi) in q.iter().enumerate() {
        let r = qi.m - row_dot(x, i, w);
        for (j, g) in grad.iter_mut().take(d).enumerate() {
            *g += r * x[(i, j)] / lambda2;
        }
        grad[d] += -0.5 + (qi.v + r * r) / (2.0 * lambda2);
    }
    grad
}

/// Closed-form maximizer of [`mstep_objective`]: `w` regresses the
/// variational means on `X`, `λ² = mean(vᵢ + (mᵢ − wᵀxᵢ)²)`.
pub fn mstep_update(q: &[VariationalGaussian], x: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let m: Vec<f64> = q.iter().map(|qi| qi.m).collect();
    let w: Vec<f64> = least_squares(x, &m, None)?.iter().copied().collect();
    let lambda2 = q
        .iter()
        .enumerate()
        .map(|(i, qi)| qi.v + (qi.m - row_dot(x, i, &w)).powi(2))
        .sum::<f64>()
        / q.len() as f64;
    Ok((w, lambda2))
}

/// The variational objective
/// `Σᵢ { mᵢyᵢ − E_q[a(ηᵢ)] + log h(yᵢ) + E_q[log N(ηᵢ; wᵀxᵢ, λ²)] + H[qᵢ] }`.
pub fn glm_elbo(
    data: &RegressionDataset,
    family: Family,
    q: &[VariationalGaussian],
    w: &[f64],
    lambda2: f64,
) -> f64 {
    let lik: f64 = q
        .iter()
        .zip(&data.y)
        .map(|(qi, &y)| {
            qi.m * y - expected_log_normalizer_with_path(qi, family).0
                + family.log_base_measure(y)
                + qi.entropy()
        })
        .sum();
    lik + mstep_objective(q, &data.x, w, lambda2)
}

fn row_dot(x: &DMatrix<f64>, i: usize, w: &[f64]) -> f64 {
    x.row(i).iter().zip(w).map(|(a, b)| a * b).sum()
}

fn estep(
    data: &RegressionDataset,
    family: Family,
    w: &[f64],
    lambda2: f64,
    config: &LaplaceConfig,
) -> Result<Vec<VariationalGaussian>> {
    let prior = data.linear_predictor(w);
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            laplace_estep(data.y[i], family, prior[i], lambda2, config).map_err(|e| match e {
                Error::InvalidData { detail, .. } => Error::InvalidData { index: i, detail },
                other => other,
            })
        })
        .collect()
}

/// Fits a robust GLM by variational EM with Laplace E-steps.
///
/// `w` starts at the standard GLM fit and `λ²` at half the variance of its
/// working residuals. For the Gaussian family the E-step is exact and the
/// EM fixed point is the marginal maximum-likelihood solution, which is
/// computed directly.
pub fn fit_robust_glm(
    data: &RegressionDataset,
    family: Family,
    config: &RobustGlmConfig,
) -> Result<RobustGlmModel> {
    super::check_glm_family(family)?;
    data.validate_for(family)?;
    if !(config.tol > 0.0) || config.max_iters == 0 {
        return Err(Error::param(
            "robust_glm_config",
            format!("tol {} max_iters {}", config.tol, config.max_iters),
        ));
    }
    if let Some(l) = config.freeze_lambda2 {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param(
                "robust_glm_config",
                format!("frozen lambda2 must be positive, got {l}"),
            ));
        }
    }
    config.laplace.validate()?;
    let standard = fit_standard_glm(data, family, &config.irls)?;
    let (_, path) =
        expected_log_normalizer_with_path(&VariationalGaussian { m: 0.0, v: 1.0 }, family);

    if let Family::GaussianKnownVariance { variance } = family {
        return fit_gaussian_closed_form(
            data,
            family,
            variance,
            standard.w,
            standard.separation,
            config,
            path,
        );
    }

    let mut w = standard.w;
    let mut lambda2 = match config.freeze_lambda2 {
        Some(l) => l,
        None => 0.5 * working_residual_variance(data, family, &w),
    };
    let mut clamped = false;
    if lambda2 < LAMBDA2_FLOOR || !lambda2.is_finite() {
        lambda2 = LAMBDA2_FLOOR;
        clamped = true;
    }

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut dropped = false;
    let mut q = Vec::new();
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        q = estep(data, family, &w, lambda2, &config.laplace)?;
        let (w_new, l_new) = mstep_update(&q, &data.x)?;
        w = w_new;
        match config.freeze_lambda2 {
            Some(l) => lambda2 = l,
            None => {
                clamped = l_new < LAMBDA2_FLOOR;
                lambda2 = l_new.max(LAMBDA2_FLOOR);
            }
        }
        let elbo = glm_elbo(data, family, &q, &w, lambda2);
        if !elbo.is_finite() {
            return Err(Error::Degenerate(format!(
                "ELBO became non-finite at iteration {iterations}"
            )));
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if elbo < prev - ELBO_DROP_TOL * prev.abs() {
                dropped = true;
            }
            let done = (elbo - prev).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE);
            trace.push(elbo);
            if done {
                converged = true;
                break;
            }
        } else {
            trace.push(elbo);
        }
    }

    Ok(RobustGlmModel {
        w,
        lambda2,
        family,
        elbo_trace: trace,
        iterations,
        converged,
        effectively_non_robust: clamped,
        elbo_drop_flagged: dropped,
        separation: standard.separation,
        expectation_path: path,
        q,
    })
}

/// Variance of the IRLS working residuals `(yᵢ − μᵢ)/a″(ηᵢ)`.
fn working_residual_variance(data: &RegressionDataset, family: Family, w: &[f64]) -> f64 {
    let resid: Vec<f64> = data
        .linear_predictor(w)
        .iter()
        .zip(&data.y)
        .map(|(&eta, &y)| (y - family.scalar_mean(eta)) / family.scalar_variance(eta).max(1e-290))
        .collect();
    let n = resid.len() as f64;
    let mean = resid.iter().sum::<f64>() / n;
    resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
}

/// `yᵢ ~ N(σ²wᵀxᵢ, σ² + σ⁴λ²)` marginally, so `w` is the least-squares fit
/// and `λ²` follows from the residual variance.
fn fit_gaussian_closed_form(
    data: &RegressionDataset,
    family: Family,
    variance: f64,
    w: Vec<f64>,
    separation: bool,
    config: &RobustGlmConfig,
    path: ExpectationPath,
) -> Result<RobustGlmModel> {
    let n = data.n() as f64;
    let rss: f64 = data
        .linear_predictor(&w)
        .iter()
        .zip(&data.y)
        .map(|(&eta, &y)| (y - variance * eta).powi(2))
        .sum();
    let (mut lambda2, mut clamped) = match config.freeze_lambda2 {
        Some(l) => (l, false),
        None => ((rss / n - variance) / (variance * variance), false),
    };
    if lambda2 < LAMBDA2_FLOOR {
        lambda2 = LAMBDA2_FLOOR;
        clamped = true;
    }
    let q = estep(data, family, &w, lambda2, &config.laplace)?;
    let elbo = glm_elbo(data, family, &q, &w, lambda2);
    Ok(RobustGlmModel {
        w,
        lambda2,
        family,
        elbo_trace: vec![elbo],
        iterations: 1,
        converged: true,
        effectively_non_robust: clamped,
        elbo_drop_flagged: false,
        separation,
        expectation_path: path,
        q,
    })
}
