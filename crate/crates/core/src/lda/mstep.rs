use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, trigamma};

/// Smallest allowed Dirichlet parameter.
pub const ETA_FLOOR: f64 = 1e-8;

const MAX_NEWTON_ITERS: usize = 200;
const STATIONARITY_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletFit {
    pub eta: Vec<f64>,
    /// Coordinates clamped at [`ETA_FLOOR`].
    pub floor_hits: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// `D·[log Γ(Σ_v η_v) − Σ_v log Γ(η_v) + Σ_v (η_v − 1) s_v]` where `s` holds
/// the document-averaged expected log topic probabilities.
pub fn dirichlet_objective(eta: &[f64], mean_stats: &[f64], num_docs: f64) -> f64 {
    let total: f64 = eta.iter().sum();
    let body: f64 = eta
        .iter()
        .zip(mean_stats)
        .map(|(&e, &s)| (e - 1.0) * s - ln_gamma(e))
        .sum();
    num_docs * (ln_gamma(total) + body)
}

/// Gradient of [`dirichlet_objective`] with respect to `η`.
pub fn dirichlet_objective_grad(eta: &[f64], mean_stats: &[f64], num_docs: f64) -> Vec<f64> {
    let psi_total = digamma(eta.iter().sum());
    eta.iter()
        .zip(mean_stats)
        .map(|(&e, &s)| num_docs * (psi_total - digamma(e) + s))
        .collect()
}

/// Gradient of [`dirichlet_objective`] with respect to `log η`.
pub fn dirichlet_objective_grad_log(eta: &[f64], mean_stats: &[f64], num_docs: f64) -> Vec<f64> {
    dirichlet_objective_grad(eta, mean_stats, num_docs)
        .into_iter()
        .zip(eta)
        .map(|(g, e)| g * e)
        .collect()
}

/// Dirichlet maximum likelihood from expected log sufficient statistics.
///
/// The objective is concave in `η`, so Newton's method is run directly in
/// `η`; the Hessian is diagonal plus rank one and is inverted in linear time.
/// Steps are halved until the objective does not decrease, with entries
/// projected onto `[ETA_FLOOR, ∞)`.
pub fn mstep_eta(mean_stats: &[f64], num_docs: f64, init: &[f64]) -> Result<DirichletFit> {
    if mean_stats.len() != init.len() || init.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: init.len(),
            got: mean_stats.len(),
        });
    }
    if let Some(v) = mean_stats.iter().position(|s| !s.is_finite() || *s >= 0.0) {
        return Err(Error::data(
            v,
            format!(
                "expected log probability {} is not negative and finite",
                mean_stats[v]
            ),
        ));
    }
    if !(num_docs > 0.0) {
        return Err(Error::param(
            "mstep_eta",
            "number of documents must be positive",
        ));
    }
    let mut eta: Vec<f64> = init.iter().map(|&e| e.max(ETA_FLOOR)).collect();
    let mut value = dirichlet_objective(&eta, mean_stats, num_docs);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..MAX_NEWTON_ITERS {
        let total: f64 = eta.iter().sum();
        let psi_total = digamma(total);
        let resid: Vec<f64> = eta
            .iter()
            .zip(mean_stats)
            .map(|(&e, &s)| psi_total - digamma(e) + s)
            .collect();
        let active_max = resid
            .iter()
            .zip(&eta)
            .filter(|(r, &e)| !(e <= ETA_FLOOR && **r < 0.0))
            .fold(0.0f64, |m, (r, _)| m.max(r.abs()));
        if active_max <= STATIONARITY_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        // H = diag(q) + z·11ᵀ with q_v = −ψ′(η_v), z = ψ′(Σ η); all scaled by D
        let q: Vec<f64> = eta.iter().map(|&e| -trigamma(e)).collect();
        let z = trigamma(total);
        let b = resid.iter().zip(&q).map(|(g, q)| g / q).sum::<f64>()
            / (1.0 / z + q.iter().map(|q| 1.0 / q).sum::<f64>());
        let step: Vec<f64> = resid.iter().zip(&q).map(|(g, q)| -(g - b) / q).collect();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = eta
                .iter()
                .zip(&step)
                .map(|(e, s)| (e + t * s).max(ETA_FLOOR))
                .collect();
            let cand_value = dirichlet_objective(&cand, mean_stats, num_docs);
            // near the optimum the objective is flat to rounding, so a
            // smaller stationarity residual also counts as progress
            let flat = cand_value >= value - 64.0 * f64::EPSILON * value.abs()
                && max_abs_residual(&cand, mean_stats) < max_abs_residual(&eta, mean_stats);
            if cand_value.is_finite() && (cand_value >= value || flat) {
                accepted = cand != eta;
                eta = cand;
                value = cand_value;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let floor_hits = eta.iter().filter(|&&e| e <= ETA_FLOOR).count();
    Ok(DirichletFit {
        eta,
        floor_hits,
        iterations,
        converged,
    })
}

fn max_abs_residual(eta: &[f64], mean_stats: &[f64]) -> f64 {
    let psi_total = digamma(eta.iter().sum());
    eta.iter()
        .zip(mean_stats)
        .filter(|(&e, &s)| !(e <= ETA_FLOOR && psi_total - digamma(e) + s < 0.0))
        .fold(0.0f64, |m, (&e, &s)| {
            m.max((psi_total - digamma(e) + s).abs())
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::estep::dirichlet_expectation;
    use crate::rng::rng_for;
    use rand::Rng;

    #[test]
    fn moment_matching_oracle() {
        let mut rng = rng_for(31, &[0]);
        for _ in 0..10 {
            let truth: Vec<f64> = (0..12).map(|_| rng.random_range(0.05..20.0)).collect();
            let stats = dirichlet_expectation(&truth);
            let init = vec![1.0; 12];
            let fit = mstep_eta(&stats, 7.0, &init).unwrap();
            assert!(fit.converged && fit.floor_hits == 0, "{fit:?}");
            let psi_total = digamma(fit.eta.iter().sum());
            for (e, s) in fit.eta.iter().zip(&stats) {
                assert!((digamma(*e) - psi_total - s).abs() < 1e-8);
            }
            for (e, t) in fit.eta.iter().zip(&truth) {
                assert!((e - t).abs() / t < 1e-6);
            }
            assert!(
                dirichlet_objective(&fit.eta, &stats, 7.0)
                    >= dirichlet_objective(&init, &stats, 7.0)
            );
        }
    }

    #[test]
    fn symmetric_statistics_give_symmetric_eta() {
        let stats = dirichlet_expectation(&[0.7; 5]);
        let fit = mstep_eta(&stats, 3.0, &[0.2, 1.0, 3.0, 0.5, 9.0]).unwrap();
        for e in &fit.eta {
            assert!((e - 0.7).abs() < 1e-8);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_for(32, &[1]);
        let eta: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..4.0)).collect();
        let stats = dirichlet_expectation(&[0.5, 1.0, 2.0, 0.3, 0.9, 4.0]);
        let g = dirichlet_objective_grad_log(&eta, &stats, 5.0);
        let h = 1e-6;
        for v in 0..6 {
            let at = |delta: f64| {
                let mut e = eta.clone();
                e[v] *= delta.exp();
                dirichlet_objective(&e, &stats, 5.0)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!(
                (fd - g[v]).abs() <= 1e-6 * (1.0 + g[v].abs()),
                "v={v}: {fd} vs {}",
                g[v]
            );
        }
        let fit = mstep_eta(&stats, 5.0, &eta).unwrap();
        let g = dirichlet_objective_grad(&fit.eta, &stats, 5.0);
        assert!(g.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn rejects_invalid_statistics() {
        assert!(mstep_eta(&[0.1, -1.0], 1.0, &[1.0, 1.0]).is_err());
        assert!(mstep_eta(&[-1.0], 1.0, &[1.0, 1.0]).is_err());
    }
}
