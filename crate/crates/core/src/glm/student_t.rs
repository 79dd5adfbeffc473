use serde::{Deserialize, Serialize};

use super::dataset::RegressionDataset;
use crate::conjugate::{student_t_logpdf_unchecked, NU_RANGE};
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::optim::golden_section_max;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTConfig {
    pub max_iters: usize,
    /// Relative log-likelihood change that ends the EM loop.
    pub tol: f64,
}

impl Default for StudentTConfig {
    fn default() -> Self {
        StudentTConfig {
            max_iters: 500,
            tol: 1e-10,
        }
    }
}

/// Linear regression with student's t errors: `yᵢ = wᵀxᵢ + εᵢ`,
/// `εᵢ ~ t_ν(0, s)` with squared scale `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentTRegressionModel {
    pub w: Vec<f64>,
    pub s: f64,
    pub nu: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn student_t_loglik(data: &RegressionDataset, w: &[f64], s: f64, nu: f64) -> f64 {
    data.linear_predictor(w)
        .iter()
        .zip(&data.y)
        .map(|(&mu, &y)| student_t_logpdf_unchecked(y, nu, mu, s))
        .sum()
}

/// E-step weights `γᵢ = (ν + 1)/(ν + rᵢ²/s)`.
pub fn precision_weights(residuals: &[f64], s: f64, nu: f64) -> Vec<f64> {
    residuals
        .iter()
        .map(|r| (nu + 1.0) / (nu + r * r / s))
        .collect()
}

fn residuals(data: &RegressionDataset, w: &[f64]) -> Vec<f64> {
    data.linear_predictor(w)
        .iter()
        .zip(&data.y)
        .map(|(m, y)| y - m)
        .collect()
}

/// ECME: weighted least squares for `w`, closed-form `s`, then a direct
/// search over `log ν` on the observed likelihood.
pub fn fit_student_t_regression(
    data: &RegressionDataset,
    config: &StudentTConfig,
) -> Result<StudentTRegressionModel> {
    if !(config.tol > 0.0) || config.max_iters == 0 {
        return Err(Error::param("student_t_config", format!("{config:?}")));
    }
    let n = data.n() as f64;
    let mut w: Vec<f64> = least_squares(&data.x, &data.y, None)?
        .iter()
        .copied()
        .collect();
    let r = residuals(data, &w);
    let y_scale = data.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.iter().all(|v| v.abs() <= 1e-12 * (1.0 + y_scale)) {
        return Err(Error::Degenerate(
            "all residuals are zero; the scale is not identified".into(),
        ));
    }
    let mut s = r.iter().map(|v| v * v).sum::<f64>() / n;
    let mut nu = update_nu(data, &w, s, 30.0);
    let mut ll = student_t_loglik(data, &w, s, nu);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let gamma = precision_weights(&residuals(data, &w), s, nu);
        w = least_squares(&data.x, &data.y, Some(&gamma))?
            .iter()
            .copied()
            .collect();
        let r = residuals(data, &w);
        s = gamma.iter().zip(&r).map(|(g, v)| g * v * v).sum::<f64>() / n;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Degenerate(format!(
                "scale collapsed to {s} at iteration {iterations}"
            )));
        }
        nu = update_nu(data, &w, s, nu);
        let prev = ll;
        ll = student_t_loglik(data, &w, s, nu);
        trace.push(ll);
        if (ll - prev).abs() <= config.tol * (1.0 + prev.abs()) {
            converged = true;
            break;
        }
    }
    Ok(StudentTRegressionModel {
        w,
        s,
        nu,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

fn update_nu(data: &RegressionDataset, w: &[f64], s: f64, current: f64) -> f64 {
    let r = residuals(data, w);
    let profile = |log_nu: f64| -> f64 {
        let nu = log_nu.exp();
        r.iter()
            .map(|&v| student_t_logpdf_unchecked(v, nu, 0.0, s))
            .sum()
    };
    let (lo, hi) = (NU_RANGE.0.ln(), NU_RANGE.1.ln());
    let found = golden_section_max(profile, lo, hi, 1e-10).clamp(lo, hi);
    let keep = current.ln().clamp(lo, hi);
    let mut best = (keep, profile(keep));
    for cand in [found, hi] {
        let v = profile(cand);
        if v > best.1 {
            best = (cand, v);
        }
    }
    best.0.exp()
}
