//! Localized conjugate Gaussian models.
//!
//! * Localized mean: `xᵢ ~ N(μᵢ, σ²)`, `μᵢ ~ N(μ₀, λ²)`. The marginal is
//!   `N(μ₀, σ² + λ²)`, so the empirical-Bayes λ² is closed form and the
//!   posterior means are shrinkage estimates.
//! * Localized variance: `xᵢ ~ N(μ, σᵢ²)` with precision `1/σᵢ² ~ Gamma(a, rate b)`.
//!   The marginal is a student's t with `ν = 2a` degrees of freedom and
//!   squared scale `φ = b/a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::ConjugateHyper;
use crate::optim::bracketed_newton;
use crate::special::{digamma, ln_gamma, trigamma};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Fitted localized-mean Gaussian model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizedGaussianMeanModel {
    pub sigma2: f64,
    pub lambda2: f64,
    pub mu0: f64,
    /// The unconstrained maximizer was negative and λ² sits on the boundary.
    pub clamped: bool,
    pub marginal_loglik: f64,
}

impl LocalizedGaussianMeanModel {
    pub fn marginal_log_density(&self, x: f64) -> f64 {
        let var = self.sigma2 + self.lambda2;
        -0.5 * (LN_2PI + var.ln() + (x - self.mu0).powi(2) / var)
    }

    /// Shrinkage factor λ²/(λ² + σ²).
    pub fn shrinkage_factor(&self) -> f64 {
        let denom = self.lambda2 + self.sigma2;
        if denom == 0.0 {
            1.0
        } else {
            self.lambda2 / denom
        }
    }

    /// Posterior means `E[μᵢ | xᵢ]`.
    pub fn shrinkage_estimates(&self, data: &[f64]) -> Vec<f64> {
        let f = self.shrinkage_factor();
        data.iter().map(|x| self.mu0 + f * (x - self.mu0)).collect()
    }

    /// The same prior as conjugate hyperparameters for the Normal–Normal pair,
    /// or `None` when λ² = 0 (a point-mass prior has no natural form).
    pub fn conjugate_hyper(&self) -> Option<ConjugateHyper> {
        (self.lambda2 > 0.0).then(|| ConjugateHyper::normal(self.mu0, self.lambda2, self.sigma2))
    }
}

/// Empirical-Bayes fit of λ² with prior mean 0.
pub fn fit_gaussian_mean_eb(data: &[f64], sigma2: f64) -> Result<LocalizedGaussianMeanModel> {
    fit_gaussian_mean_eb_about(data, sigma2, 0.0)
}

/// Empirical-Bayes fit of λ² with a given prior mean:
/// `λ² = max(0, mean((xᵢ − μ₀)²) − σ²)`.
pub fn fit_gaussian_mean_eb_about(
    data: &[f64],
    sigma2: f64,
    mu0: f64,
) -> Result<LocalizedGaussianMeanModel> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::param(
            "gaussian_mean",
            format!("sigma2 must be positive, got {sigma2}"),
        ));
    }
    if !mu0.is_finite() {
        return Err(Error::param("gaussian_mean", "mu0 must be finite"));
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::data(i, "non-finite observation"));
    }
    let n = data.len() as f64;
    let second_moment = data.iter().map(|x| (x - mu0).powi(2)).sum::<f64>() / n;
    let excess = second_moment - sigma2;
    let lambda2 = excess.max(0.0);
    let mut model = LocalizedGaussianMeanModel {
        sigma2,
        lambda2,
        mu0,
        clamped: excess < 0.0,
        marginal_loglik: 0.0,
    };
    model.marginal_loglik = data.iter().map(|&x| model.marginal_log_density(x)).sum();
    Ok(model)
}

/// Log density of the student's t
/// `Γ((ν+1)/2) / (Γ(ν/2) √(πνφ)) · (1 + (y−μ)²/(νφ))^{−(ν+1)/2}`.
pub fn student_t_logpdf(y: f64, nu: f64, mu: f64, phi: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::param(
            "student_t",
            format!("nu must be positive, got {nu}"),
        ));
    }
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(Error::param(
            "student_t",
            format!("phi must be positive, got {phi}"),
        ));
    }
    Ok(student_t_logpdf_unchecked(y, nu, mu, phi))
}

pub(crate) fn student_t_logpdf_unchecked(y: f64, nu: f64, mu: f64, phi: f64) -> f64 {
    let z2 = (y - mu).powi(2) / (nu * phi);
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (std::f64::consts::PI * nu * phi).ln()
        - 0.5 * (nu + 1.0) * z2.ln_1p()
}

/// Lower and upper bounds on ν explored by the t fits.
pub const NU_RANGE: (f64, f64) = (0.2, 1e6);
/// Above this ν a fit is reported as effectively Gaussian.
pub const NU_EFFECTIVELY_GAUSSIAN: f64 = 1e4;

const EM_REL_TOL: f64 = 1e-8;
const EM_MAX_ITERS: usize = 500;

/// Fitted localized-variance (student's t) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedVarianceModel {
    pub mu: f64,
    /// Gamma shape of the per-point precision.
    pub a: f64,
    /// Gamma rate of the per-point precision.
    pub b: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
}

impl LocalizedVarianceModel {
    pub fn nu(&self) -> f64 {
        2.0 * self.a
    }

    /// Squared scale φ of the marginal t.
    pub fn phi(&self) -> f64 {
        self.b / self.a
    }

    pub fn effectively_gaussian(&self) -> bool {
        self.nu() > NU_EFFECTIVELY_GAUSSIAN
    }

    pub fn marginal_log_density(&self, x: f64) -> f64 {
        student_t_logpdf_unchecked(x, self.nu(), self.mu, self.phi())
    }

    pub fn marginal_loglik(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| self.marginal_log_density(x)).sum()
    }
}

/// Solves `ln a − ψ(a) = c` for the Gamma shape, clamped to the ν range.
pub(crate) fn gamma_shape_from_log_gap(c: f64) -> f64 {
    let (lo, hi) = (0.5 * NU_RANGE.0, 0.5 * NU_RANGE.1);
    let g = |a: f64| a.ln() - digamma(a) - c;
    if !(c > 0.0) || g(hi) >= 0.0 {
        return hi;
    }
    if g(lo) <= 0.0 {
        return lo;
    }
    let x0 = (0.5 / c).clamp(lo, hi);
    // Work in u = ln a, where the function is smoother.
    let u = bracketed_newton(
        |u| {
            let a = u.exp();
            (g(a), (1.0 / a - trigamma(a)) * a)
        },
        lo.ln(),
        hi.ln(),
        x0.ln(),
        1e-14,
    );
    u.exp()
}

/// Maximum-likelihood fit of the localized-variance model by EM.
///
/// The E-step uses the conjugate Gamma posterior of each precision,
/// `Gamma(a + ½, b + (xᵢ − μ)²/2)`; the M-step maximizes the expected
/// complete log likelihood, with `b = a·n/ΣE[τᵢ]` in closed form and `a`
/// from a 1-D Newton solve on the profile.
pub fn fit_localized_variance(data: &[f64], mu: f64) -> Result<LocalizedVarianceModel> {
    if data.len() < 3 {
        return Err(Error::Degenerate(format!(
            "localized variance fit needs at least 3 observations, got {}",
            data.len()
        )));
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::data(i, "non-finite observation"));
    }
    let n = data.len() as f64;
    let sq: Vec<f64> = data.iter().map(|x| (x - mu).powi(2)).collect();
    let mean_sq = sq.iter().sum::<f64>() / n;
    if mean_sq == 0.0 {
        return Err(Error::Degenerate(
            "all observations equal the mean; the scale MLE is zero".into(),
        ));
    }

    let mut model = LocalizedVarianceModel {
        mu,
        a: 2.0,
        b: mean_sq,
        loglik_trace: Vec::new(),
        iterations: 0,
    };
    let mut prev = model.marginal_loglik(data);
    model.loglik_trace.push(prev);
    for iter in 1..=EM_MAX_ITERS {
        let shape_post = model.a + 0.5;
        let (mut sum_tau, mut sum_log_tau) = (0.0, 0.0);
        for &s in &sq {
            let rate_post = model.b + 0.5 * s;
            sum_tau += shape_post / rate_post;
            sum_log_tau += digamma(shape_post) - rate_post.ln();
        }
        let c = (sum_tau / n).ln() - sum_log_tau / n;
        model.a = gamma_shape_from_log_gap(c);
        model.b = model.a * n / sum_tau;
        model.iterations = iter;

        let ll = model.marginal_loglik(data);
        model.loglik_trace.push(ll);
        if (ll - prev).abs() <= EM_REL_TOL * ll.abs() {
            return Ok(model);
        }
        prev = ll;
    }
    Err(Error::NonConvergence {
        what: "localized variance EM".into(),
        iterations: EM_MAX_ITERS,
        trace: model.loglik_trace,
    })
}
