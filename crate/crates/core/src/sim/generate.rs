use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::RegressionDataset;
use crate::rng::{derive_seed, rng_for};
use crate::special::sigmoid;

/// Noise-free standard deviation of the linear responses.
pub const LINEAR_BASE_SD: f64 = 0.02;
/// Largest Poisson rate accepted before the coefficients are redrawn.
pub const MAX_POISSON_RATE: f64 = 1e15;
const MAX_REDRAWS: usize = 1000;

const TRUTH: u64 = 0;
const TRAIN_X: u64 = 1;
const TEST_X: u64 = 2;
const TRAIN_NOISE: u64 = 3;
const TEST_NOISE: u64 = 4;
const TRAIN_SCALE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
    Poisson,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Logistic => "logistic",
            ModelKind::Poisson => "poisson",
        }
    }

    /// Half-width of the uniform covariate range.
    pub fn covariate_scale(self) -> f64 {
        match self {
            ModelKind::Poisson => 1.0,
            _ => 5.0,
        }
    }

    /// The noise grid used for figure reproduction.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            ModelKind::Linear => vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            ModelKind::Logistic => vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25],
            ModelKind::Poisson => vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

/// One simulation setting. The noise level is the Gamma shape `k` for
/// linear data, the flipped fraction for logistic data and the log-rate
/// noise standard deviation `σ` for Poisson data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: ModelKind,
    pub d: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_level: f64,
    pub reps: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(kind: ModelKind, noise_level: f64, seed: u64) -> Self {
        SimSpec {
            kind,
            d: 5,
            n_train: 500,
            n_test: 500,
            noise_level,
            reps: 50,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.reps == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(Error::param(
                "sim",
                "d, reps and sample sizes must be positive",
            ));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::param(
                "sim",
                format!(
                    "noise level must be finite and nonnegative, got {}",
                    self.noise_level
                ),
            ));
        }
        if self.kind == ModelKind::Logistic && self.noise_level > 1.0 {
            return Err(Error::param(
                "sim",
                format!("flip fraction must be in [0, 1], got {}", self.noise_level),
            ));
        }
        Ok(())
    }

    /// Seed recorded for repetition `rep`; every stream of the repetition
    /// derives from it.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        derive_seed(self.seed, &[rep as u64])
    }
}

/// Training data (corrupted) and test data (clean) for one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub train: RegressionDataset,
    pub test: RegressionDataset,
    pub w_true: Vec<f64>,
    /// Linear intercept; the logistic and Poisson truths have none.
    pub b_true: Option<f64>,
    /// Per-point training noise: `σᵢ` (linear) or `εᵢ` (Poisson).
    pub train_noise: Vec<f64>,
    /// Indices of flipped training labels.
    pub flipped: Vec<usize>,
    /// Coefficient redraws forced by overflowing Poisson rates.
    pub redraws: usize,
}

/// Generates repetition `rep`. The result depends only on `(spec, rep)`;
/// truths and covariates do not depend on the noise level.
pub fn generate(spec: &SimSpec, rep: usize) -> Result<SimData> {
    spec.validate()?;
    match spec.kind {
        ModelKind::Linear => Ok(gen_linear(spec, rep)),
        ModelKind::Logistic => Ok(gen_logistic(spec, rep)),
        ModelKind::Poisson => gen_poisson(spec, rep),
    }
}

fn stream(spec: &SimSpec, rep: usize, id: u64) -> ChaCha8Rng {
    rng_for(spec.rep_seed(rep), &[id])
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn covariates(spec: &SimSpec, rep: usize, id: u64, n: usize) -> DMatrix<f64> {
    let mut rng = stream(spec, rep, id);
    let h = spec.kind.covariate_scale();
    DMatrix::from_fn(n, spec.d, |_, _| rng.random_range(-h..h))
}

fn dataset(x: DMatrix<f64>, y: Vec<f64>) -> RegressionDataset {
    RegressionDataset::new(x, y).expect("simulated data is finite and nonempty")
}

fn linear_predictor(x: &DMatrix<f64>, w: &[f64], b: f64) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b)
        .collect()
}

/// `y = wᵀx + b + (σᵢ + 0.02)·zᵢ` with `σᵢ ~ Gamma(k, 1)` on the training
/// set (`σᵢ = 0` at `k = 0`) and `σᵢ = 0` on the test set.
pub fn gen_linear(spec: &SimSpec, rep: usize) -> SimData {
    let mut truth = stream(spec, rep, TRUTH);
    let w = normals(&mut truth, spec.d);
    let b: f64 = truth.sample(StandardNormal);
    let k = spec.noise_level;
    let sigma: Vec<f64> = if k == 0.0 {
        vec![0.0; spec.n_train]
    } else {
        let gamma = Gamma::new(k, 1.0).expect("positive shape");
        let mut rng = stream(spec, rep, TRAIN_SCALE);
        (0..spec.n_train).map(|_| gamma.sample(&mut rng)).collect()
    };
    let respond = |x: &DMatrix<f64>, sd: &dyn Fn(usize) -> f64, id: u64| -> Vec<f64> {
        let z = normals(&mut stream(spec, rep, id), x.nrows());
        linear_predictor(x, &w, b)
            .iter()
            .enumerate()
            .map(|(i, m)| m + sd(i) * z[i])
            .collect()
    };
    let x_train = covariates(spec, rep, TRAIN_X, spec.n_train);
    let x_test = covariates(spec, rep, TEST_X, spec.n_test);
    let y_train = respond(&x_train, &|i| sigma[i] + LINEAR_BASE_SD, TRAIN_NOISE);
    let y_test = respond(&x_test, &|_| LINEAR_BASE_SD, TEST_NOISE);
    SimData {
        train: dataset(x_train, y_train),
        test: dataset(x_test, y_test),
        w_true: w,
        b_true: Some(b),
        train_noise: sigma,
        flipped: Vec::new(),
        redraws: 0,
    }
}

/// Indices of the `⌈p·n⌉` margins closest to zero, ties broken by index.
pub fn boundary_indices(margins: &[f64], fraction: f64) -> Vec<usize> {
    let count = ((fraction * margins.len() as f64).ceil() as usize).min(margins.len());
    let mut order: Vec<usize> = (0..margins.len()).collect();
    order.sort_by(|&a, &b| {
        margins[a]
            .abs()
            .total_cmp(&margins[b].abs())
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Labels `y ~ Bernoulli(σ(wᵀx))`; the training labels nearest the true
/// decision boundary are then flipped.
pub fn gen_logistic(spec: &SimSpec, rep: usize) -> SimData {
    let w = normals(&mut stream(spec, rep, TRUTH), spec.d);
    let labels = |x: &DMatrix<f64>, id: u64| -> (Vec<f64>, Vec<f64>) {
        let mut rng = stream(spec, rep, id);
        let eta = linear_predictor(x, &w, 0.0);
        let y = eta
            .iter()
            .map(|&e| {
                if rng.random::<f64>() < sigmoid(e) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        (eta, y)
    };
    let x_train = covariates(spec, rep, TRAIN_X, spec.n_train);
    let x_test = covariates(spec, rep, TEST_X, spec.n_test);
    let (eta, mut y_train) = labels(&x_train, TRAIN_NOISE);
    let (_, y_test) = labels(&x_test, TEST_NOISE);
    let flipped = boundary_indices(&eta, spec.noise_level);
    for &i in &flipped {
        y_train[i] = 1.0 - y_train[i];
    }
    SimData {
        train: dataset(x_train, y_train),
        test: dataset(x_test, y_test),
        w_true: w,
        b_true: None,
        train_noise: Vec::new(),
        flipped,
        redraws: 0,
    }
}

/// `y ~ Poisson(exp{wᵀx + εᵢ})` with `εᵢ ~ N(0, σ²)` on the training set and
/// `εᵢ = 0` on the test set. Coefficients are redrawn while any rate
/// exceeds [`MAX_POISSON_RATE`].
pub fn gen_poisson(spec: &SimSpec, rep: usize) -> Result<SimData> {
    let sigma = spec.noise_level;
    let x_train = covariates(spec, rep, TRAIN_X, spec.n_train);
    let x_test = covariates(spec, rep, TEST_X, spec.n_test);
    let eps: Vec<f64> = normals(&mut stream(spec, rep, TRAIN_SCALE), spec.n_train)
        .iter()
        .map(|z| sigma * z)
        .collect();
    let mut truth = stream(spec, rep, TRUTH);
    for redraws in 0..MAX_REDRAWS {
        let w = normals(&mut truth, spec.d);
        let train_rate: Vec<f64> = linear_predictor(&x_train, &w, 0.0)
            .iter()
            .zip(&eps)
            .map(|(m, e)| (m + e).exp())
            .collect();
        let test_rate: Vec<f64> = linear_predictor(&x_test, &w, 0.0)
            .iter()
            .map(|m| m.exp())
            .collect();
        if train_rate
            .iter()
            .chain(&test_rate)
            .any(|&r| !(r <= MAX_POISSON_RATE))
        {
            continue;
        }
        let counts = |rates: &[f64], id: u64| -> Vec<f64> {
            let mut rng = stream(spec, rep, id);
            rates
                .iter()
                .map(|&r| {
                    if r > 0.0 {
                        Poisson::new(r)
                            .expect("positive finite rate")
                            .sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        return Ok(SimData {
            train: dataset(x_train, counts(&train_rate, TRAIN_NOISE)),
            test: dataset(x_test, counts(&test_rate, TEST_NOISE)),
            w_true: w,
            b_true: None,
            train_noise: eps,
            flipped: Vec::new(),
            redraws,
        });
    }
    Err(Error::Degenerate(format!(
        "Poisson rates exceeded {MAX_POISSON_RATE:e} after {MAX_REDRAWS} coefficient draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_noise_scale_has_gamma_mean() {
        for k in [0.5, 2.0, 5.0] {
            let spec = SimSpec::new(ModelKind::Linear, k, 11);
            let data = gen_linear(&spec, 3);
            let n = data.train_noise.len() as f64;
            let mean = data.train_noise.iter().sum::<f64>() / n;
            // Gamma(k, 1) has variance k
            assert!((mean - k).abs() < 3.0 * (k / n).sqrt(), "k={k}: {mean}");
        }
        let data = gen_linear(&SimSpec::new(ModelKind::Linear, 0.0, 11), 3);
        assert!(data.train_noise.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn truth_and_covariates_are_shared_across_noise_levels() {
        let a = gen_linear(&SimSpec::new(ModelKind::Linear, 0.0, 5), 2);
        let b = gen_linear(&SimSpec::new(ModelKind::Linear, 3.0, 5), 2);
        assert_eq!(
            (&a.w_true, a.b_true, &a.train.x, &a.test),
            (&b.w_true, b.b_true, &b.train.x, &b.test)
        );
        assert_ne!(a.train.y, b.train.y);
        assert_ne!(
            gen_linear(&SimSpec::new(ModelKind::Linear, 0.0, 5), 3).w_true,
            a.w_true
        );
    }

    #[test]
    fn flip_fraction_extremes() {
        let none = gen_logistic(&SimSpec::new(ModelKind::Logistic, 0.0, 1), 0);
        assert!(none.flipped.is_empty());
        let all = gen_logistic(&SimSpec::new(ModelKind::Logistic, 1.0, 1), 0);
        assert_eq!(all.flipped.len(), 500);
        for (a, b) in all.train.y.iter().zip(&none.train.y) {
            assert_eq!(*a, 1.0 - b);
        }
    }

    #[test]
    fn poisson_noise_inflates_mean_by_lognormal_factor() {
        let sigma = 0.8;
        let spec = SimSpec {
            n_train: 20000,
            ..SimSpec::new(ModelKind::Poisson, sigma, 4)
        };
        let data = gen_poisson(&spec, 0).unwrap();
        let eta = data.train.linear_predictor(&data.w_true);
        let ratios: Vec<f64> = data
            .train
            .y
            .iter()
            .zip(&eta)
            .map(|(y, e)| y / e.exp())
            .collect();
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = (sigma * sigma / 2.0f64).exp();
        assert!(
            (mean - expected).abs() < 3.0 * sd / n.sqrt(),
            "{mean} vs {expected}"
        );
        assert!(data.train.x.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn generators_are_pure() {
        for kind in [ModelKind::Linear, ModelKind::Logistic, ModelKind::Poisson] {
            let spec = SimSpec::new(kind, 0.5, 9);
            let later = generate(&spec, 4).unwrap();
            let _ = generate(&spec, 1).unwrap();
            assert_eq!(generate(&spec, 4).unwrap(), later);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(generate(&SimSpec::new(ModelKind::Logistic, 1.5, 0), 0).is_err());
        assert!(generate(&SimSpec::new(ModelKind::Linear, -1.0, 0), 0).is_err());
        assert!(generate(
            &SimSpec {
                d: 0,
                ..SimSpec::new(ModelKind::Linear, 1.0, 0)
            },
            0
        )
        .is_err());
    }
}
