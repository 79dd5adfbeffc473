use serde::{Deserialize, Serialize};

use super::dataset::dot;
use super::irls::GlmModel;
use super::negbin::{negbin_logpmf, NegBinRegressionModel};
use super::robust::RobustGlmModel;
use super::student_t::StudentTRegressionModel;
use crate::conjugate::student_t_logpdf_unchecked;
use crate::error::{Error, Result};
use crate::expfam::Family;
use crate::laplace::{laplace_estep, LaplaceConfig};
use crate::quadrature::gauss_hermite_32;
use crate::special::{ln_factorial, log_sum_exp, sigmoid};

/// Predictive summary at one covariate vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Point prediction: the mean, or the class label for binary responses
    /// (probability 0.5 predicts class 1).
    pub point: f64,
    pub mean: f64,
    pub variance: f64,
    /// Class-1 probability for binary responses.
    pub prob: Option<f64>,
}

impl Prediction {
    fn from_mean(mean: f64, variance: f64) -> Self {
        Prediction {
            point: mean,
            mean,
            variance,
            prob: None,
        }
    }

    fn binary(p: f64) -> Self {
        Prediction {
            point: if p >= 0.5 { 1.0 } else { 0.0 },
            mean: p,
            variance: p * (1.0 - p),
            prob: Some(p),
        }
    }
}

/// A fitted regression model that can summarize and score its predictive.
pub trait Predictive {
    fn dimension(&self) -> usize;

    fn predict_unchecked(&self, x: &[f64]) -> Prediction;

    fn predictive_logpdf_unchecked(&self, x: &[f64], y: f64) -> f64;

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_dim(self.dimension(), x)?;
        Ok(self.predict_unchecked(x))
    }

    /// `log p(y | x)` under the fitted predictive distribution.
    fn predictive_logpdf(&self, x: &[f64], y: f64) -> Result<f64> {
        check_dim(self.dimension(), x)?;
        Ok(self.predictive_logpdf_unchecked(x, y))
    }
}

fn check_dim(d: usize, x: &[f64]) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    Ok(())
}

fn bernoulli_logpmf(y: f64, p: f64) -> f64 {
    if y == 1.0 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

impl Predictive for GlmModel {
    fn dimension(&self) -> usize {
        self.w.len()
    }

    fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        let eta = dot(&self.w, x);
        match self.family {
            Family::Bernoulli => Prediction::binary(sigmoid(eta)),
            Family::GaussianKnownVariance { variance } => {
                Prediction::from_mean(variance * eta, self.residual_variance.unwrap_or(variance))
            }
            _ => Prediction::from_mean(
                self.family.scalar_mean(eta),
                self.family.scalar_variance(eta),
            ),
        }
    }

    fn predictive_logpdf_unchecked(&self, x: &[f64], y: f64) -> f64 {
        let eta = dot(&self.w, x);
        match self.family {
            Family::GaussianKnownVariance { variance } => {
                let var = self
                    .residual_variance
                    .unwrap_or(variance)
                    .max(f64::MIN_POSITIVE);
                normal_logpdf(y, variance * eta, var)
            }
            _ => self.family.log_density(y, eta),
        }
    }
}

fn normal_logpdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * (y - mean).powi(2) / var
}

impl RobustGlmModel {
    /// `∫ σ(η) N(η; ŵᵀx, λ²) dη` by 32-node Gauss–Hermite quadrature.
    fn class_probability(&self, mu: f64) -> f64 {
        gauss_hermite_32().normal_expectation(mu, self.lambda2, sigmoid)
    }
}

impl Predictive for RobustGlmModel {
    fn dimension(&self) -> usize {
        self.w.len()
    }

    fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        let mu = dot(&self.w, x);
        let l2 = self.lambda2;
        match self.family {
            Family::Bernoulli => Prediction::binary(self.class_probability(mu)),
            Family::Poisson => {
                let mean = (mu + 0.5 * l2).exp();
                Prediction::from_mean(mean, mean + l2.exp_m1() * (2.0 * mu + l2).exp())
            }
            Family::GaussianKnownVariance { variance } => {
                Prediction::from_mean(variance * mu, variance + variance * variance * l2)
            }
            Family::Categorical { .. } => unreachable!("rejected at fit time"),
        }
    }

    fn predictive_logpdf_unchecked(&self, x: &[f64], y: f64) -> f64 {
        let mu = dot(&self.w, x);
        match self.family {
            Family::Bernoulli => bernoulli_logpmf(y, self.class_probability(mu)),
            Family::Poisson => poisson_lognormal_logpmf(y, mu, self.lambda2),
            Family::GaussianKnownVariance { variance } => normal_logpdf(
                y,
                variance * mu,
                variance + variance * variance * self.lambda2,
            ),
            Family::Categorical { .. } => unreachable!("rejected at fit time"),
        }
    }
}

/// `log ∫ Poisson(y; e^η) N(η; μ, λ²) dη`, by Gauss–Hermite quadrature
/// centred on the Laplace approximation of the integrand.
pub(crate) fn poisson_lognormal_logpmf(y: f64, mu: f64, lambda2: f64) -> f64 {
    let Ok(q) = laplace_estep(y, Family::Poisson, mu, lambda2, &LaplaceConfig::default()) else {
        return f64::NAN;
    };
    let rule = gauss_hermite_32();
    let scale = (2.0 * q.v).sqrt();
    // ∫ e^{g} dη = √(2v) Σ wⱼ e^{tⱼ²} e^{g(m + √(2v) tⱼ)}
    let terms: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &wt)| {
            let eta = q.m + scale * t;
            wt.ln() + t * t + y * eta - eta.exp() - 0.5 * (eta - mu).powi(2) / lambda2
        })
        .collect();
    log_sum_exp(&terms) + scale.ln()
        - ln_factorial(y)
        - 0.5 * (2.0 * std::f64::consts::PI * lambda2).ln()
}

impl Predictive for NegBinRegressionModel {
    fn dimension(&self) -> usize {
        self.w.len()
    }

    fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        let mean = dot(&self.w, x).exp();
        Prediction::from_mean(mean, mean + mean * mean / self.r)
    }

    fn predictive_logpdf_unchecked(&self, x: &[f64], y: f64) -> f64 {
        negbin_logpmf(y, dot(&self.w, x).exp(), self.r)
    }
}

impl Predictive for StudentTRegressionModel {
    fn dimension(&self) -> usize {
        self.w.len()
    }

    fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        let variance = if self.nu > 2.0 {
            self.s * self.nu / (self.nu - 2.0)
        } else {
            f64::INFINITY
        };
        Prediction::from_mean(dot(&self.w, x), variance)
    }

    fn predictive_logpdf_unchecked(&self, x: &[f64], y: f64) -> f64 {
        student_t_logpdf_unchecked(y, self.nu, dot(&self.w, x), self.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::ExpectationPath;
    use crate::quadrature::GaussHermite;

    fn robust(family: Family, w: Vec<f64>, lambda2: f64) -> RobustGlmModel {
        RobustGlmModel {
            w,
            lambda2,
            family,
            elbo_trace: vec![0.0],
            iterations: 1,
            converged: true,
            effectively_non_robust: false,
            elbo_drop_flagged: false,
            separation: false,
            expectation_path: ExpectationPath::Exact,
            q: Vec::new(),
        }
    }

    #[test]
    fn robust_poisson_moments() {
        let m = robust(Family::Poisson, vec![0.0], 1e-300);
        let p = m.predict(&[1.0]).unwrap();
        assert!((p.mean - 1.0).abs() < 1e-12 && (p.variance - 1.0).abs() < 1e-12);
        let m = robust(Family::Poisson, vec![0.0], 0.5);
        let p = m.predict(&[1.0]).unwrap();
        assert!((p.mean - 1.2840).abs() < 1e-4);
        assert!((p.variance - 2.3537).abs() < 2e-4);
    }

    #[test]
    fn robust_logistic_is_symmetric_at_zero() {
        for &l2 in &[1e-6, 0.3, 4.0, 50.0] {
            let m = robust(Family::Bernoulli, vec![0.0, 0.0], l2);
            let p = m.predict(&[0.4, 1.0]).unwrap();
            assert!((p.prob.unwrap() - 0.5).abs() < 1e-14);
            assert_eq!(p.point, 1.0);
        }
    }

    #[test]
    fn poisson_lognormal_matches_dense_quadrature() {
        let dense = GaussHermite::new(150);
        for &(y, mu, l2) in &[
            (0.0, 0.3, 0.25),
            (3.0, 0.0, 1.0),
            (25.0, 1.0, 0.5),
            (2.0, -1.0, 0.01),
        ] {
            let direct = dense
                .normal_expectation(mu, l2, |eta| (y * eta - eta.exp() - ln_factorial(y)).exp())
                .ln();
            let approx = poisson_lognormal_logpmf(y, mu, l2);
            assert!(
                (approx - direct).abs() < 1e-6,
                "y={y} mu={mu} l2={l2}: {approx} vs {direct}"
            );
        }
        let total: f64 = (0..2000)
            .map(|y| poisson_lognormal_logpmf(y as f64, 0.5, 0.8).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn dimension_is_checked() {
        let m = robust(Family::Poisson, vec![0.0, 1.0], 0.1);
        assert!(matches!(
            m.predict(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }
}
