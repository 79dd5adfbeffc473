//! Laplace variational E-step for a scalar localized natural parameter.
//!
//! For a response `y` with likelihood `ExpFam(η)` and prior `η ~ N(m₀, v₀)`,
//! the optimal variational factor is approximated by `N(η̂, −1/f″(η̂))`
//! where `η̂` maximizes `f(η) = ηy − a(η) − (η − m₀)²/(2v₀)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::Family;

/// Approximate posterior `N(m, v)` over one localized natural parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalGaussian {
    pub m: f64,
    pub v: f64,
}

impl VariationalGaussian {
    /// Entropy `½ log(2πe v)`.
    pub fn entropy(&self) -> f64 {
        0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * self.v).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceConfig {
    pub max_newton_iters: usize,
    /// Gradient tolerance, relative to the magnitude of the gradient's terms.
    pub grad_tol: f64,
    /// Backtracking shrink factor.
    pub shrink: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        LaplaceConfig {
            max_newton_iters: 50,
            grad_tol: 1e-10,
            shrink: 0.5,
        }
    }
}

impl LaplaceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_newton_iters == 0
            || !(self.grad_tol > 0.0)
            || !(self.shrink > 0.0 && self.shrink < 1.0)
        {
            return Err(Error::param("laplace_config", format!("{self:?}")));
        }
        Ok(())
    }
}

/// Largest Newton step, keeping `a(η)` finite for the Poisson family.
const MAX_STEP: f64 = 20.0;

struct Objective {
    family: Family,
    y: f64,
    prior_mean: f64,
    prior_var: f64,
}

impl Objective {
    fn value(&self, eta: f64) -> f64 {
        eta * self.y
            - self.family.scalar_log_normalizer(eta)
            - 0.5 * (eta - self.prior_mean).powi(2) / self.prior_var
    }

    fn grad(&self, eta: f64) -> f64 {
        self.y - self.family.scalar_mean(eta) - (eta - self.prior_mean) / self.prior_var
    }

    fn curvature(&self, eta: f64) -> f64 {
        self.family.scalar_variance(eta) + 1.0 / self.prior_var
    }

    /// Scale of the gradient's terms at `eta`, for a relative stopping rule.
    fn grad_scale(&self, eta: f64) -> f64 {
        1.0 + self.y.abs()
            + self.family.scalar_mean(eta).abs()
            + ((eta - self.prior_mean) / self.prior_var).abs()
    }

    fn finish(&self, eta: f64) -> VariationalGaussian {
        VariationalGaussian {
            m: eta,
            v: 1.0 / self.curvature(eta),
        }
    }
}

/// Laplace approximation to `p(η | y, m₀, v₀)`.
///
/// Newton's method from the prior mean with a step cap and backtracking on
/// `f`; if that fails to meet the tolerance, bisection on `f′` (which is
/// strictly decreasing) over an expanding bracket.
pub fn laplace_estep(
    y: f64,
    family: Family,
    prior_mean: f64,
    prior_var: f64,
    config: &LaplaceConfig,
) -> Result<VariationalGaussian> {
    config.validate()?;
    family.validate()?;
    if !family.is_scalar() {
        return Err(Error::param(
            family.name(),
            "Laplace E-step needs a scalar family",
        ));
    }
    if !(prior_var > 0.0 && prior_var.is_finite()) {
        return Err(Error::param(
            "laplace_estep",
            format!("prior_var must be positive, got {prior_var}"),
        ));
    }
    if !prior_mean.is_finite() {
        return Err(Error::param("laplace_estep", "prior_mean must be finite"));
    }
    if !family.in_support(y) {
        return Err(Error::data(
            0,
            format!("{y} is outside the {} support", family.name()),
        ));
    }
    let obj = Objective {
        family,
        y,
        prior_mean,
        prior_var,
    };

    let mut eta = prior_mean;
    if family == Family::Poisson && y > 0.0 {
        let alt = (y + 1.0).ln();
        if obj.value(alt) > obj.value(eta) {
            eta = alt;
        }
    }
    let mut trace = Vec::with_capacity(config.max_newton_iters);
    for _ in 0..config.max_newton_iters {
        let g = obj.grad(eta);
        trace.push(g);
        if g.abs() <= config.grad_tol * obj.grad_scale(eta) {
            return Ok(obj.finish(eta));
        }
        let step = (g / obj.curvature(eta)).clamp(-MAX_STEP, MAX_STEP);
        let f0 = obj.value(eta);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = eta + t * step;
            let fc = obj.value(cand);
            if fc.is_finite() && fc >= f0 {
                moved = cand != eta;
                eta = cand;
                break;
            }
            t *= config.shrink;
        }
        if !moved {
            break;
        }
    }
    bisect_gradient(&obj, eta, config).ok_or(Error::NonConvergence {
        what: "Laplace E-step".into(),
        iterations: config.max_newton_iters,
        trace,
    })
}

fn bisect_gradient(
    obj: &Objective,
    start: f64,
    config: &LaplaceConfig,
) -> Option<VariationalGaussian> {
    let g0 = obj.grad(start);
    if !g0.is_finite() {
        return None;
    }
    let dir = if g0 > 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (start, start);
    let mut width = 1.0;
    let mut found = false;
    for _ in 0..12 {
        let probe = start + dir * width;
        let gp = obj.grad(probe);
        if gp.is_nan() {
            return None;
        }
        if gp * dir <= 0.0 {
            if dir > 0.0 {
                hi = probe;
            } else {
                lo = probe;
            }
            found = true;
            break;
        }
        if dir > 0.0 {
            lo = probe;
        } else {
            hi = probe;
        }
        width *= 2.0;
    }
    if !found {
        return None;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if obj.grad(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = if obj.grad(lo).abs() <= obj.grad(hi).abs() {
        lo
    } else {
        hi
    };
    let g = obj.grad(eta);
    let adjacent = (hi - lo) <= 4.0 * f64::EPSILON * eta.abs().max(1e-300);
    (g.abs() <= config.grad_tol * obj.grad_scale(eta) || adjacent).then(|| obj.finish(eta))
}

/// How `E_q[a(η)]` was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationPath {
    Exact,
    Delta,
}

/// `E_q[a(η)]`: exact for Poisson (`exp(m + v/2)`) and Gaussian, otherwise
/// the second-order delta approximation `a(m) + ½ v a″(m)`.
pub fn expected_log_normalizer(q: &VariationalGaussian, family: Family) -> f64 {
    expected_log_normalizer_with_path(q, family).0
}

pub fn expected_log_normalizer_with_path(
    q: &VariationalGaussian,
    family: Family,
) -> (f64, ExpectationPath) {
    match family {
        Family::Poisson => ((q.m + 0.5 * q.v).exp(), ExpectationPath::Exact),
        Family::GaussianKnownVariance { variance } => {
            (0.5 * variance * (q.m * q.m + q.v), ExpectationPath::Exact)
        }
        _ => (
            family.scalar_log_normalizer(q.m) + 0.5 * q.v * family.scalar_variance(q.m),
            ExpectationPath::Delta,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::sigmoid;

    fn cfg() -> LaplaceConfig {
        LaplaceConfig::default()
    }

    #[test]
    fn gaussian_is_conjugate_exact() {
        let q = laplace_estep(1.0, Family::gaussian(1.0), 0.0, 1.0, &cfg()).unwrap();
        assert!((q.m - 0.5).abs() < 1e-12 && (q.v - 0.5).abs() < 1e-12);
        // general σ²: η = (y + m₀/v₀)/(σ² + 1/v₀)
        let q = laplace_estep(-2.0, Family::gaussian(3.0), 0.7, 0.4, &cfg()).unwrap();
        let prec = 3.0 + 1.0 / 0.4;
        assert!((q.m - (-2.0 + 0.7 / 0.4) / prec).abs() < 1e-12);
        assert!((q.v - 1.0 / prec).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_matches_bisection_oracle() {
        // root of 1 − σ(η) − η = 0
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - sigmoid(mid) - mid > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = laplace_estep(1.0, Family::Bernoulli, 0.0, 1.0, &cfg()).unwrap();
        assert!((q.m - lo).abs() < 1e-10);
        assert!((q.m - 0.40106).abs() < 1e-5);
        let s = sigmoid(q.m);
        assert!((q.v - 1.0 / (s * (1.0 - s) + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn prior_dominated_limit() {
        for fam in [Family::Bernoulli, Family::Poisson, Family::gaussian(1.0)] {
            let q = laplace_estep(1.0, fam, 0.3, 1e-10, &cfg()).unwrap();
            assert!((q.m - 0.3).abs() < 1e-8, "{fam:?}");
            assert!((q.v - 1e-10).abs() / 1e-10 < 1e-8);
        }
    }

    #[test]
    fn large_poisson_counts_do_not_overflow() {
        let q = laplace_estep(250_000.0, Family::Poisson, -30.0, 0.01, &cfg()).unwrap();
        assert!(q.m.is_finite() && q.v > 0.0);
        let q = laplace_estep(250_000.0, Family::Poisson, 0.0, 100.0, &cfg()).unwrap();
        assert!((q.m - 250_000f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(laplace_estep(0.5, Family::Bernoulli, 0.0, 1.0, &cfg()).is_err());
        assert!(laplace_estep(1.0, Family::Bernoulli, 0.0, 0.0, &cfg()).is_err());
        let bad = LaplaceConfig {
            shrink: 1.0,
            ..cfg()
        };
        assert!(laplace_estep(1.0, Family::Bernoulli, 0.0, 1.0, &bad).is_err());
    }

    #[test]
    fn expected_log_normalizer_examples() {
        let q = VariationalGaussian { m: 0.0, v: 0.5 };
        let (v, path) = expected_log_normalizer_with_path(&q, Family::Poisson);
        assert!((v - 0.25f64.exp()).abs() < 1e-15);
        assert_eq!(path, ExpectationPath::Exact);
        for fam in [Family::Bernoulli, Family::Poisson, Family::gaussian(2.0)] {
            let point = VariationalGaussian { m: 0.8, v: 0.0 };
            assert_eq!(
                expected_log_normalizer(&point, fam),
                fam.scalar_log_normalizer(0.8)
            );
        }
        let q = VariationalGaussian { m: 0.0, v: 1.0 };
        let (v, path) = expected_log_normalizer_with_path(&q, Family::Bernoulli);
        assert!((v - (std::f64::consts::LN_2 + 0.125)).abs() < 1e-15);
        assert_eq!(path, ExpectationPath::Delta);
    }
}
