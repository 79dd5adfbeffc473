//! Exponential families and their conjugate priors.
//!
//! A likelihood is written `p(x | η) = h(x) exp{η·t(x) − a(η)}`. Its conjugate
//! prior over η is `p(η | α) ∝ exp{α₁·η − α₂·a(η) − A(α)}`, so the
//! posterior after observing `x₁..xₙ` is `[α₁ + Σxᵢ, α₂ + n]` and the
//! integrated likelihood of one datum is `h(x)·exp{A(α₁ + x, α₂ + 1) − A(α)}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_beta, ln_factorial, ln_gamma, log_sum_exp, sigmoid, softplus};

/// Likelihood families with a known log normalizer.
///
/// `GaussianKnownVariance` uses `t(x) = x` and natural parameter `η = μ/σ²`,
/// so `a(η) = σ²η²/2` and the variance is a fixed family constant.
/// `Categorical` uses the minimal parameterization with category 0 as the
/// reference, so η has `categories − 1` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Bernoulli,
    Poisson,
    GaussianKnownVariance { variance: f64 },
    Categorical { categories: usize },
}

impl Family {
    pub fn gaussian(variance: f64) -> Self {
        Family::GaussianKnownVariance { variance }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::GaussianKnownVariance { .. } => "gaussian_known_variance",
            Family::Categorical { .. } => "categorical",
        }
    }

    /// Length of the natural parameter.
    pub fn dimension(&self) -> usize {
        match self {
            Family::Categorical { categories } => categories.saturating_sub(1),
            _ => 1,
        }
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(self, Family::Categorical { .. })
    }

    /// Checks the family's own constants (variance, category count).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::GaussianKnownVariance { variance }
                if !(variance > 0.0 && variance.is_finite()) =>
            {
                Err(Error::param(
                    self.name(),
                    format!("variance must be positive, got {variance}"),
                ))
            }
            Family::Categorical { categories } if categories < 2 => Err(Error::param(
                self.name(),
                format!("need at least 2 categories, got {categories}"),
            )),
            _ => Ok(()),
        }
    }

    fn check_eta(&self, eta: &[f64]) -> Result<()> {
        self.validate()?;
        if eta.len() != self.dimension() {
            return Err(Error::param(
                self.name(),
                format!(
                    "natural parameter has length {}, expected {}",
                    eta.len(),
                    self.dimension()
                ),
            ));
        }
        if let Some(k) = eta.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                self.name(),
                format!("component {k} of eta is not finite ({})", eta[k]),
            ));
        }
        Ok(())
    }

    /// The log normalizer `a(η)`.
    pub fn log_normalizer(&self, eta: &[f64]) -> Result<f64> {
        self.check_eta(eta)?;
        let value = match *self {
            Family::Categorical { .. } => categorical_log_normalizer(eta),
            _ => self.scalar_log_normalizer(eta[0]),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::param(
                self.name(),
                format!("log normalizer overflows at component 0 (eta = {})", eta[0]),
            ))
        }
    }

    /// `∇a(η) = E[t(x)]`.
    pub fn log_normalizer_grad(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.log_normalizer(eta)?;
        Ok(match *self {
            Family::Categorical { .. } => categorical_probs(eta),
            _ => vec![self.scalar_mean(eta[0])],
        })
    }

    /// `∇²a(η) = Var[t(x)]`, row-major.
    pub fn log_normalizer_hess(&self, eta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.log_normalizer(eta)?;
        Ok(match *self {
            Family::Categorical { .. } => {
                let p = categorical_probs(eta);
                (0..p.len())
                    .map(|i| {
                        (0..p.len())
                            .map(|j| {
                                if i == j {
                                    p[i] * (1.0 - p[i])
                                } else {
                                    -p[i] * p[j]
                                }
                            })
                            .collect()
                    })
                    .collect()
            }
            _ => vec![vec![self.scalar_variance(eta[0])]],
        })
    }

    /// `a(η)` for scalar families, without validation.
    pub fn scalar_log_normalizer(&self, eta: f64) -> f64 {
        match *self {
            Family::Bernoulli => softplus(eta),
            Family::Poisson => eta.exp(),
            Family::GaussianKnownVariance { variance } => 0.5 * variance * eta * eta,
            Family::Categorical { .. } => categorical_log_normalizer(&[eta]),
        }
    }

    /// `a′(η)` for scalar families.
    pub fn scalar_mean(&self, eta: f64) -> f64 {
        match *self {
            Family::Bernoulli => sigmoid(eta),
            Family::Poisson => eta.exp(),
            Family::GaussianKnownVariance { variance } => variance * eta,
            Family::Categorical { .. } => sigmoid(eta),
        }
    }

    /// `a″(η)` for scalar families.
    pub fn scalar_variance(&self, eta: f64) -> f64 {
        match *self {
            Family::Bernoulli | Family::Categorical { .. } => {
                let p = sigmoid(eta);
                p * (1.0 - p)
            }
            Family::Poisson => eta.exp(),
            Family::GaussianKnownVariance { variance } => variance,
        }
    }

    /// `log h(x)` for scalar families.
    pub fn log_base_measure(&self, x: f64) -> f64 {
        match *self {
            Family::Bernoulli | Family::Categorical { .. } => 0.0,
            Family::Poisson => -ln_factorial(x),
            Family::GaussianKnownVariance { variance } => {
                -0.5 * x * x / variance - 0.5 * (2.0 * std::f64::consts::PI * variance).ln()
            }
        }
    }

    /// Whether `x` is a valid sufficient statistic for a scalar family.
    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            Family::Bernoulli => x == 0.0 || x == 1.0,
            Family::Poisson => x >= 0.0 && x.fract() == 0.0 && x.is_finite(),
            Family::GaussianKnownVariance { .. } => x.is_finite(),
            Family::Categorical { categories } => {
                x >= 0.0 && x.fract() == 0.0 && (x as usize) < categories
            }
        }
    }

    /// `log p(x | η)` for scalar families.
    pub fn log_density(&self, x: f64, eta: f64) -> f64 {
        self.log_base_measure(x) + eta * x - self.scalar_log_normalizer(eta)
    }
}

fn categorical_log_normalizer(eta: &[f64]) -> f64 {
    let mut with_ref = Vec::with_capacity(eta.len() + 1);
    with_ref.push(0.0);
    with_ref.extend_from_slice(eta);
    log_sum_exp(&with_ref)
}

fn categorical_probs(eta: &[f64]) -> Vec<f64> {
    let lse = categorical_log_normalizer(eta);
    eta.iter().map(|e| (e - lse).exp()).collect()
}

/// Hyperparameters `[α₁, α₂]` of a conjugate prior; `α₂` is the pseudo-count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugateHyper {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ConjugateHyper {
    pub fn new(alpha1: f64, alpha2: f64) -> Self {
        ConjugateHyper { alpha1, alpha2 }
    }

    /// Beta(a, b) over the Bernoulli success probability.
    pub fn beta(a: f64, b: f64) -> Self {
        ConjugateHyper::new(a, a + b)
    }

    /// Gamma(shape, rate) over the Poisson rate.
    pub fn gamma(shape: f64, rate: f64) -> Self {
        ConjugateHyper::new(shape, rate)
    }

    /// N(mean, prior_var) over the mean of a Gaussian with variance `noise_var`.
    pub fn normal(mean: f64, prior_var: f64, noise_var: f64) -> Self {
        let alpha2 = noise_var / prior_var;
        ConjugateHyper::new(mean * alpha2, alpha2)
    }
}

/// The implemented conjugate prior–likelihood pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pair", rename_all = "snake_case")]
pub enum ConjugatePair {
    BetaBernoulli,
    GammaPoisson,
    /// Gaussian prior on the mean of a Gaussian with known variance.
    NormalNormal {
        variance: f64,
    },
}

impl ConjugatePair {
    pub fn likelihood(&self) -> Family {
        match *self {
            ConjugatePair::BetaBernoulli => Family::Bernoulli,
            ConjugatePair::GammaPoisson => Family::Poisson,
            ConjugatePair::NormalNormal { variance } => Family::gaussian(variance),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ConjugatePair::BetaBernoulli => "beta_bernoulli",
            ConjugatePair::GammaPoisson => "gamma_poisson",
            ConjugatePair::NormalNormal { .. } => "normal_normal",
        }
    }

    /// Checks that `A(α)` is finite at `hyper`.
    pub fn validate(&self, hyper: &ConjugateHyper) -> Result<()> {
        self.likelihood().validate()?;
        let ConjugateHyper { alpha1, alpha2 } = *hyper;
        if !(alpha1.is_finite() && alpha2.is_finite()) {
            return Err(Error::param(
                self.name(),
                format!("non-finite hyperparameters [{alpha1}, {alpha2}]"),
            ));
        }
        if alpha2 <= 0.0 {
            return Err(Error::param(
                self.name(),
                format!("alpha2 must be positive, got {alpha2}"),
            ));
        }
        match self {
            ConjugatePair::BetaBernoulli if alpha1 <= 0.0 || alpha2 - alpha1 <= 0.0 => {
                Err(Error::param(
                    self.name(),
                    format!("need 0 < alpha1 < alpha2, got [{alpha1}, {alpha2}]"),
                ))
            }
            ConjugatePair::GammaPoisson if alpha1 <= 0.0 => Err(Error::param(
                self.name(),
                format!("alpha1 (shape) must be positive, got {alpha1}"),
            )),
            _ => Ok(()),
        }
    }

    /// The prior log normalizer `A(α)`.
    pub fn prior_log_normalizer(&self, hyper: &ConjugateHyper) -> Result<f64> {
        self.validate(hyper)?;
        Ok(self.prior_log_normalizer_unchecked(hyper.alpha1, hyper.alpha2))
    }

    fn prior_log_normalizer_unchecked(&self, a1: f64, a2: f64) -> f64 {
        match *self {
            ConjugatePair::BetaBernoulli => ln_beta(a1, a2 - a1),
            ConjugatePair::GammaPoisson => ln_gamma(a1) - a1 * a2.ln(),
            ConjugatePair::NormalNormal { variance } => {
                let prec = a2 * variance;
                0.5 * a1 * a1 / prec + 0.5 * (2.0 * std::f64::consts::PI / prec).ln()
            }
        }
    }

    /// `∂A/∂α₁, ∂A/∂α₂` — the prior expectations of `η` and `−a(η)`.
    pub fn prior_log_normalizer_grad(&self, hyper: &ConjugateHyper) -> Result<[f64; 2]> {
        self.validate(hyper)?;
        Ok(self.prior_grad_unchecked(hyper.alpha1, hyper.alpha2))
    }

    fn prior_grad_unchecked(&self, a1: f64, a2: f64) -> [f64; 2] {
        match *self {
            ConjugatePair::BetaBernoulli => {
                let rest = digamma(a2 - a1);
                [digamma(a1) - rest, rest - digamma(a2)]
            }
            ConjugatePair::GammaPoisson => [digamma(a1) - a2.ln(), -a1 / a2],
            ConjugatePair::NormalNormal { variance } => [
                a1 / (a2 * variance),
                -a1 * a1 / (2.0 * a2 * a2 * variance) - 0.5 / a2,
            ],
        }
    }

    fn check_data(&self, data: &[f64]) -> Result<()> {
        let family = self.likelihood();
        match data.iter().position(|&x| !family.in_support(x)) {
            Some(i) => Err(Error::data(
                i,
                format!("{} is outside the {} support", data[i], family.name()),
            )),
            None => Ok(()),
        }
    }

    /// Posterior hyperparameters `[α₁ + Σxᵢ, α₂ + n]`.
    pub fn posterior_update(&self, prior: &ConjugateHyper, data: &[f64]) -> Result<ConjugateHyper> {
        self.validate(prior)?;
        self.check_data(data)?;
        Ok(ConjugateHyper::new(
            prior.alpha1 + data.iter().sum::<f64>(),
            prior.alpha2 + data.len() as f64,
        ))
    }

    /// `log p(x | α)` for a single datum, including the base measure.
    pub fn log_integrated_likelihood(&self, prior: &ConjugateHyper, x: f64) -> Result<f64> {
        self.validate(prior)?;
        self.check_data(std::slice::from_ref(&x))?;
        let post = ConjugateHyper::new(prior.alpha1 + x, prior.alpha2 + 1.0);
        self.validate(&post)?;
        Ok(self.likelihood().log_base_measure(x)
            + self.prior_log_normalizer_unchecked(post.alpha1, post.alpha2)
            - self.prior_log_normalizer_unchecked(prior.alpha1, prior.alpha2))
    }

    pub fn integrated_likelihood(&self, prior: &ConjugateHyper, x: f64) -> Result<f64> {
        self.log_integrated_likelihood(prior, x).map(f64::exp)
    }

    /// `Σᵢ log p(xᵢ | α)` for the localized model.
    pub fn marginal_loglik(&self, prior: &ConjugateHyper, data: &[f64]) -> Result<f64> {
        self.validate(prior)?;
        self.check_data(data)?;
        let family = self.likelihood();
        let base = self.prior_log_normalizer_unchecked(prior.alpha1, prior.alpha2);
        let mut total = 0.0;
        for (i, &x) in data.iter().enumerate() {
            let (p1, p2) = (prior.alpha1 + x, prior.alpha2 + 1.0);
            self.validate(&ConjugateHyper::new(p1, p2))
                .map_err(|e| match e {
                    Error::InvalidParameter { family, detail } => Error::InvalidParameter {
                        family,
                        detail: format!("posterior for datum {i}: {detail}"),
                    },
                    other => other,
                })?;
            total +=
                family.log_base_measure(x) + self.prior_log_normalizer_unchecked(p1, p2) - base;
        }
        Ok(total)
    }

    /// Gradient of [`marginal_loglik`](Self::marginal_loglik) in `(α₁, α₂)`.
    pub fn marginal_loglik_grad(&self, prior: &ConjugateHyper, data: &[f64]) -> Result<[f64; 2]> {
        self.marginal_loglik(prior, data)?;
        let n = data.len() as f64;
        let g0 = self.prior_grad_unchecked(prior.alpha1, prior.alpha2);
        let mut g = [-n * g0[0], -n * g0[1]];
        for &x in data {
            let gi = self.prior_grad_unchecked(prior.alpha1 + x, prior.alpha2 + 1.0);
            g[0] += gi[0];
            g[1] += gi[1];
        }
        Ok(g)
    }

    // Unconstrained coordinates: logs of the positivity-constrained quantities.
    fn unconstrain(&self, h: &ConjugateHyper) -> [f64; 2] {
        match self {
            ConjugatePair::BetaBernoulli => [h.alpha1.ln(), (h.alpha2 - h.alpha1).ln()],
            ConjugatePair::GammaPoisson => [h.alpha1.ln(), h.alpha2.ln()],
            ConjugatePair::NormalNormal { .. } => [h.alpha1, h.alpha2.ln()],
        }
    }

    fn constrain(&self, u: [f64; 2]) -> ConjugateHyper {
        match self {
            ConjugatePair::BetaBernoulli => {
                let a1 = u[0].exp();
                ConjugateHyper::new(a1, a1 + u[1].exp())
            }
            ConjugatePair::GammaPoisson => ConjugateHyper::new(u[0].exp(), u[1].exp()),
            ConjugatePair::NormalNormal { .. } => ConjugateHyper::new(u[0], u[1].exp()),
        }
    }

    fn unconstrained_grad(&self, h: &ConjugateHyper, g: [f64; 2]) -> [f64; 2] {
        match self {
            // α₁ = e^{u₀}, α₂ = e^{u₀} + e^{u₁}
            ConjugatePair::BetaBernoulli => {
                [(g[0] + g[1]) * h.alpha1, g[1] * (h.alpha2 - h.alpha1)]
            }
            ConjugatePair::GammaPoisson => [g[0] * h.alpha1, g[1] * h.alpha2],
            ConjugatePair::NormalNormal { .. } => [g[0], g[1] * h.alpha2],
        }
    }

    fn grad_u(&self, u: [f64; 2], data: &[f64]) -> Result<[f64; 2]> {
        let h = self.constrain(u);
        Ok(self.unconstrained_grad(&h, self.marginal_loglik_grad(&h, data)?))
    }

    /// Empirical-Bayes hyperparameters: maximizes the marginal likelihood in
    /// unconstrained coordinates (logs of the positive quantities), so no
    /// iterate can leave the hyperparameter domain.
    ///
    /// Steps are Newton directions when the finite-difference Hessian of the
    /// analytic gradient is negative definite and gradient directions
    /// otherwise, both with backtracking.
    pub fn fit_marginal_ml(
        &self,
        data: &[f64],
        init: &ConjugateHyper,
        max_iters: usize,
    ) -> Result<MarginalFit> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let mut hyper = *init;
        let mut value = self.marginal_loglik(&hyper, data)?;
        let mut u = self.unconstrain(&hyper);
        for iter in 0..max_iters {
            let g = self.grad_u(u, data)?;
            let gnorm = g[0].hypot(g[1]);
            if gnorm <= 1e-9 * (1.0 + value.abs()) {
                return Ok(MarginalFit {
                    hyper,
                    loglik: value,
                    iterations: iter,
                    converged: true,
                });
            }
            let eps = 1e-5;
            let mut hess = [[0.0; 2]; 2];
            let mut finite = true;
            for j in 0..2 {
                let mut up = u;
                let mut dn = u;
                up[j] += eps;
                dn[j] -= eps;
                match (self.grad_u(up, data), self.grad_u(dn, data)) {
                    (Ok(gu), Ok(gd)) => {
                        for i in 0..2 {
                            hess[i][j] = (gu[i] - gd[i]) / (2.0 * eps);
                        }
                    }
                    _ => finite = false,
                }
            }
            let h01 = 0.5 * (hess[0][1] + hess[1][0]);
            let det = hess[0][0] * hess[1][1] - h01 * h01;
            let mut dir = if finite && hess[0][0] < 0.0 && det > 0.0 {
                // −H⁻¹g
                [
                    -(hess[1][1] * g[0] - h01 * g[1]) / det,
                    -(-h01 * g[0] + hess[0][0] * g[1]) / det,
                ]
            } else {
                g
            };
            let dnorm = dir[0].hypot(dir[1]);
            if dnorm > 5.0 {
                dir = [5.0 * dir[0] / dnorm, 5.0 * dir[1] / dnorm];
            }
            let slope = g[0] * dir[0] + g[1] * dir[1];
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-12 {
                let cand_u = [u[0] + step * dir[0], u[1] + step * dir[1]];
                let cand = self.constrain(cand_u);
                if let Ok(v) = self.marginal_loglik(&cand, data) {
                    if v >= value + 1e-4 * step * slope {
                        accepted = v > value || (v - value).abs() <= 1e-15 * value.abs();
                        u = cand_u;
                        hyper = cand;
                        value = v;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                return Ok(MarginalFit {
                    hyper,
                    loglik: value,
                    iterations: iter,
                    converged: true,
                });
            }
        }
        Ok(MarginalFit {
            hyper,
            loglik: value,
            iterations: max_iters,
            converged: false,
        })
    }
}

/// Result of [`ConjugatePair::fit_marginal_ml`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalFit {
    pub hyper: ConjugateHyper,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}
