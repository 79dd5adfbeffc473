use serde::{Deserialize, Serialize};

use super::dataset::RegressionDataset;
use crate::error::Result;
use crate::expfam::Family;
use crate::linalg::least_squares;

/// Coefficient norm beyond which a logistic fit is reported as separated.
pub const SEPARATION_NORM: f64 = 1e6;

/// Smallest IRLS weight, so saturated points keep a finite working response.
const MIN_WEIGHT: f64 = 1e-290;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsConfig {
    pub max_iters: usize,
    /// Stop when no coefficient moves more than `tol·(1 + max|w|)`.
    pub tol: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        IrlsConfig {
            max_iters: 100,
            tol: 1e-10,
        }
    }
}

/// Maximum-likelihood GLM with canonical link; the linear predictor is the
/// natural parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub w: Vec<f64>,
    pub family: Family,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when `‖w‖` exceeded [`SEPARATION_NORM`].
    pub separation: bool,
    /// Mean squared residual on the response scale (Gaussian family only).
    pub residual_variance: Option<f64>,
}

impl GlmModel {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }
}

/// `Σ log p(yᵢ | ηᵢ = wᵀxᵢ)`.
pub fn glm_loglik(data: &RegressionDataset, family: Family, w: &[f64]) -> f64 {
    data.linear_predictor(w)
        .iter()
        .zip(&data.y)
        .map(|(&eta, &y)| family.log_density(y, eta))
        .sum()
}

/// Fits a standard GLM by iteratively reweighted least squares with step
/// halving whenever the log likelihood would decrease.
pub fn fit_standard_glm(
    data: &RegressionDataset,
    family: Family,
    config: &IrlsConfig,
) -> Result<GlmModel> {
    super::check_glm_family(family)?;
    data.validate_for(family)?;
    let n = data.n();

    // first working response from a smoothed mean
    let (eta0, weights0): (Vec<f64>, Vec<f64>) = data
        .y
        .iter()
        .map(|&y| {
            let eta = match family {
                Family::Bernoulli => {
                    let mu = (y + 0.5) / 2.0;
                    (mu / (1.0 - mu)).ln()
                }
                Family::Poisson => (y + 0.5).ln(),
                Family::GaussianKnownVariance { variance } => y / variance,
                Family::Categorical { .. } => unreachable!(),
            };
            (eta, family.scalar_variance(eta).max(MIN_WEIGHT))
        })
        .unzip();
    let z0: Vec<f64> = (0..n)
        .map(|i| eta0[i] + (data.y[i] - family.scalar_mean(eta0[i])) / weights0[i])
        .collect();
    let mut w: Vec<f64> = least_squares(&data.x, &z0, Some(&weights0))?
        .iter()
        .copied()
        .collect();
    let mut ll = glm_loglik(data, family, &w);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut separation = false;
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        iterations += 1;
        let eta = data.linear_predictor(&w);
        let weights: Vec<f64> = eta
            .iter()
            .map(|&e| family.scalar_variance(e).max(MIN_WEIGHT))
            .collect();
        let z: Vec<f64> = (0..n)
            .map(|i| eta[i] + (data.y[i] - family.scalar_mean(eta[i])) / weights[i])
            .collect();
        let proposal: Vec<f64> = least_squares(&data.x, &z, Some(&weights))?
            .iter()
            .copied()
            .collect();
        let (next, next_ll) = halve_until_ascent(&w, proposal, ll, |c| glm_loglik(data, family, c));
        let scale = 1.0 + next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let shift = next
            .iter()
            .zip(&w)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        w = next;
        ll = next_ll;
        trace.push(ll);
        if norm(&w) > SEPARATION_NORM {
            separation = true;
            break;
        }
        if shift <= config.tol * scale {
            converged = true;
            break;
        }
    }

    let residual_variance = match family {
        Family::GaussianKnownVariance { .. } => {
            let eta = data.linear_predictor(&w);
            Some(
                eta.iter()
                    .zip(&data.y)
                    .map(|(&e, &y)| (y - family.scalar_mean(e)).powi(2))
                    .sum::<f64>()
                    / n as f64,
            )
        }
        _ => None,
    };
    Ok(GlmModel {
        w,
        family,
        loglik_trace: trace,
        iterations,
        converged,
        separation,
        residual_variance,
    })
}

/// Moves from `current` toward `proposal`, halving the step until the
/// objective does not decrease. Returns `current` if no step helps.
pub(crate) fn halve_until_ascent(
    current: &[f64],
    proposal: Vec<f64>,
    current_value: f64,
    objective: impl Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let mut cand = proposal;
    for _ in 0..40 {
        let value = objective(&cand);
        if value.is_finite() && value >= current_value {
            return (cand, value);
        }
        for (c, w) in cand.iter_mut().zip(current) {
            *c = 0.5 * (*c + w);
        }
    }
    (current.to_vec(), current_value)
}

pub(crate) fn norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}
