use serde::{Deserialize, Serialize};

use super::dataset::RegressionDataset;
use super::irls::{fit_standard_glm, halve_until_ascent, IrlsConfig};
use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::linalg::least_squares;
use crate::optim::golden_section_max;
use crate::special::{ln_factorial, ln_gamma};

/// Upper cap on the gamma shape `r`; reaching it means no overdispersion.
pub const R_CAP: f64 = 1e6;
const R_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinConfig {
    pub max_iters: usize,
    /// Relative log-likelihood change that ends the alternation.
    pub tol: f64,
    pub irls: IrlsConfig,
}

impl Default for NegBinConfig {
    fn default() -> Self {
        NegBinConfig {
            max_iters: 100,
            tol: 1e-10,
            irls: IrlsConfig::default(),
        }
    }
}

/// Negative binomial regression: `yᵢ ~ Poisson(εᵢ exp(wᵀxᵢ))` with
/// mean-one `εᵢ ~ Gamma(r, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegBinRegressionModel {
    pub w: Vec<f64>,
    pub r: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `r` reached [`R_CAP`].
    pub poisson_equivalent: bool,
}

/// `log NB(y; mean μ, shape r)`.
pub fn negbin_logpmf(y: f64, mu: f64, r: f64) -> f64 {
    // log Γ(y + r) − log Γ(r), summed directly while it is cheap and exact
    let rising = if y <= 200.0 {
        (0..y as u64).map(|j| (r + j as f64).ln()).sum::<f64>()
    } else {
        ln_gamma(y + r) - ln_gamma(r)
    };
    let log_r_mu = (r + mu).ln();
    let tail = if y > 0.0 {
        y * (mu.ln() - log_r_mu)
    } else {
        0.0
    };
    rising - ln_factorial(y) - r * (mu / r).ln_1p() + tail
}

pub fn negbin_loglik(data: &RegressionDataset, w: &[f64], r: f64) -> f64 {
    data.linear_predictor(w)
        .iter()
        .zip(&data.y)
        .map(|(&eta, &y)| negbin_logpmf(y, eta.exp(), r))
        .sum()
}

/// Alternates Fisher scoring for `w` at fixed `r` with a one-dimensional
/// search for `r` at fixed `w`. Each step keeps the better of the old and
/// new values, so the log likelihood never decreases.
pub fn fit_negative_binomial(
    data: &RegressionDataset,
    config: &NegBinConfig,
) -> Result<NegBinRegressionModel> {
    data.validate_for(Family::Poisson)?;
    if !(config.tol > 0.0) || config.max_iters == 0 {
        return Err(Error::param("negbin_config", format!("{config:?}")));
    }
    let mut w = fit_standard_glm(data, Family::Poisson, &config.irls)?.w;
    let mut r = update_r(data, &w, R_CAP);
    let mut ll = negbin_loglik(data, &w, r);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let (w_new, ll_w) = update_w(data, w.clone(), r, ll, &config.irls)?;
        w = w_new;
        let r_new = update_r(data, &w, r);
        let ll_r = negbin_loglik(data, &w, r_new);
        let (r_next, ll_next) = if ll_r >= ll_w {
            (r_new, ll_r)
        } else {
            (r, ll_w)
        };
        r = r_next;
        let prev = ll;
        ll = ll_next;
        trace.push(ll);
        if (ll - prev).abs() <= config.tol * (1.0 + prev.abs()) {
            converged = true;
            break;
        }
    }
    Ok(NegBinRegressionModel {
        w,
        r,
        loglik_trace: trace,
        iterations,
        converged,
        poisson_equivalent: r.ln() >= R_CAP.ln() - 1e-6,
    })
}

/// Maximizes the log likelihood over `log r`, falling back to `current`.
fn update_r(data: &RegressionDataset, w: &[f64], current: f64) -> f64 {
    let mu: Vec<f64> = data.linear_predictor(w).iter().map(|e| e.exp()).collect();
    let profile = |log_r: f64| -> f64 {
        let r = log_r.exp();
        mu.iter()
            .zip(&data.y)
            .map(|(&m, &y)| negbin_logpmf(y, m, r))
            .sum()
    };
    let (lo, hi) = (R_MIN.ln(), R_CAP.ln());
    let best = golden_section_max(profile, lo, hi, 1e-10).clamp(lo, hi);
    // a profile increasing up to the cap has its maximum at the boundary
    let candidates = [best, hi, current.ln().clamp(lo, hi)];
    let mut arg = candidates[0];
    let mut val = profile(arg);
    for &c in &candidates[1..] {
        let v = profile(c);
        if v > val {
            arg = c;
            val = v;
        }
    }
    arg.exp()
}

/// Fisher scoring for `w` with log link at fixed `r`.
fn update_w(
    data: &RegressionDataset,
    mut w: Vec<f64>,
    r: f64,
    mut ll: f64,
    config: &IrlsConfig,
) -> Result<(Vec<f64>, f64)> {
    for _ in 0..config.max_iters {
        let eta = data.linear_predictor(&w);
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        let weights: Vec<f64> = mu.iter().map(|&m| (m * r / (r + m)).max(1e-290)).collect();
        let z: Vec<f64> = (0..data.n())
            .map(|i| eta[i] + (data.y[i] - mu[i]) / mu[i].max(1e-290))
            .collect();
        let proposal: Vec<f64> = least_squares(&data.x, &z, Some(&weights))?
            .iter()
            .copied()
            .collect();
        let (next, next_ll) = halve_until_ascent(&w, proposal, ll, |c| negbin_loglik(data, c, r));
        let scale = 1.0 + next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let shift = next
            .iter()
            .zip(&w)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        w = next;
        ll = next_ll;
        if shift <= config.tol * scale {
            break;
        }
    }
    Ok((w, ll))
}
