//! Gauss–Hermite quadrature for Gaussian expectations.

use std::sync::OnceLock;

/// Nodes and weights for ∫ e^{−x²} f(x) dx ≈ Σ wₖ f(xₖ).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Computes an `n`-point rule by Newton iteration on the orthonormal
    /// Hermite recurrence. The recurrence underflows beyond 150 nodes.
    pub fn new(n: usize) -> Self {
        assert!(
            (1..=150).contains(&n),
            "Gauss-Hermite rule supports 1..=150 nodes, got {n}"
        );
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^(-1/4)
        let nf = n as f64;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        x.reverse();
        w.reverse();
        GaussHermite {
            nodes: x,
            weights: w,
        }
    }

    /// E[f(η)] for η ~ N(mean, var).
    pub fn normal_expectation(&self, mean: f64, var: f64, f: impl Fn(f64) -> f64) -> f64 {
        let scale = (2.0 * var.max(0.0)).sqrt();
        let total: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum();
        total / std::f64::consts::PI.sqrt()
    }
}

/// The shared 32-node rule.
pub fn gauss_hermite_32() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(32))
}

/// The shared 64-node rule.
pub fn gauss_hermite_64() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_the_weight_function() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        for n in [5, 20, 32, 64] {
            let rule = GaussHermite::new(n);
            let m0: f64 = rule.weights.iter().sum();
            let m2: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x * x)
                .sum();
            assert!((m0 - sqrt_pi).abs() < 1e-12, "n={n}");
            assert!((m2 - sqrt_pi / 2.0).abs() < 1e-12, "n={n}");
            assert!(rule.nodes.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn lognormal_mean() {
        let got = gauss_hermite_32().normal_expectation(0.3, 0.5, f64::exp);
        assert!((got - (0.3f64 + 0.25).exp()).abs() < 1e-12);
    }
}
