//! Acceptance run: one line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use robustify::glm::{
    fit_negative_binomial, fit_robust_glm, fit_standard_glm, fit_student_t_regression,
    mstep_objective, mstep_objective_grad, IrlsConfig, NegBinConfig, Predictive, RegressionDataset,
    RobustGlmConfig, RobustGlmModel, StudentTConfig,
};
use robustify::laplace::{ExpectationPath, VariationalGaussian};
use robustify::lda::{dirichlet_objective, dirichlet_objective_grad_log, LdaConfig, LdaMode};
use robustify::rng::{derive_seed, rng_for};
use robustify::sim::{run_grid, FitSettings, Metric, MetricRecord, ModelKind, SimModel, SimSpec};
use robustify::{ConjugateHyper, ConjugatePair, Family};
use robustify_cli::lda::fit_and_score;
use robustify_cli::reproduce::lda_corpora;
use statrs::distribution::{ContinuousCDF, Normal as StatrsNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn run(&mut self, name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut o = f();
        let elapsed = start.elapsed();
        if let Some(limit) = budget {
            if elapsed > limit {
                o.pass = false;
                o.detail += &format!("; over the {} s budget", limit.as_secs());
            }
        }
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag}  {name}: {} [{:.1} s]",
            o.detail,
            elapsed.as_secs_f64()
        );
        if !o.pass {
            self.failed.push(name);
        }
    }
}

fn main() {
    let mut report = Report { failed: Vec::new() };
    report.run(
        "conjugate oracle",
        Some(Duration::from_secs(10)),
        conjugate_oracle,
    );
    report.run(
        "empirical-Bayes closed form",
        Some(Duration::from_secs(10)),
        eb_grid,
    );
    report.run("exact-EM monotonicity", None, em_monotonicity);
    report.run("nesting", None, nesting);
    report.run(
        "self-recovery",
        Some(Duration::from_secs(120)),
        self_recovery,
    );
    report.run("linear trend", Some(Duration::from_secs(300)), linear_trend);
    report.run(
        "logistic trend",
        Some(Duration::from_secs(600)),
        logistic_trend,
    );
    report.run(
        "poisson trend",
        Some(Duration::from_secs(600)),
        poisson_trend,
    );
    report.run(
        "robust poisson moments",
        Some(Duration::from_secs(30)),
        poisson_moments,
    );
    report.run("lda trend", Some(Duration::from_secs(600)), lda_trend);
    report.run("gradient suite", None, gradient_suite);
    report.run("determinism", None, determinism);
    if report.failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!(
            "acceptance: {} failing: {}",
            report.failed.len(),
            report.failed.join(", ")
        );
        std::process::exit(1);
    }
}

// ---------- quadrature oracles ----------

const TS_STEP: f64 = 1.0 / 64.0;
const TS_RANGE: f64 = 4.0;

/// Tanh-sinh rule on (0, 1); `g` receives `(θ, 1 − θ)` computed without
/// cancellation near either endpoint.
fn integrate_unit(g: impl Fn(f64, f64) -> f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let n = (TS_RANGE / TS_STEP) as i64;
    let mut total = 0.0;
    for k in -n..=n {
        let t = k as f64 * TS_STEP;
        let u = half_pi * t.sinh();
        let lo = 1.0 / (1.0 + (-2.0 * u).exp());
        let hi = 1.0 / (1.0 + (2.0 * u).exp());
        let w = half_pi * t.cosh() / (2.0 * u.cosh().powi(2));
        if lo > 0.0 && hi > 0.0 && w > 0.0 {
            total += w * g(lo, hi);
        }
    }
    total * TS_STEP
}

/// Sinh-sinh rule on the real line.
fn integrate_real(g: impl Fn(f64) -> f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let n = (3.0 / TS_STEP) as i64;
    let mut total = 0.0;
    for k in -n..=n {
        let t = k as f64 * TS_STEP;
        let u = half_pi * t.sinh();
        total += half_pi * t.cosh() * u.cosh() * g(u.sinh());
    }
    total * TS_STEP
}

fn ln_fact(x: u64) -> f64 {
    (2..=x).map(|k| (k as f64).ln()).sum()
}

fn conjugate_oracle() -> Outcome {
    let mut rng = rng_for(101, &[]);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let (a, b) = (rng.random_range(0.2..5.0), rng.random_range(0.2..5.0));
        let x = rng.random_range(0..2u32) as f64;
        let prior = |lo: f64, hi: f64| ((a - 1.0) * lo.ln() + (b - 1.0) * hi.ln()).exp();
        let num = integrate_unit(|lo, hi| if x == 1.0 { lo } else { hi } * prior(lo, hi));
        let oracle = num / integrate_unit(prior);
        let got = ConjugatePair::BetaBernoulli
            .integrated_likelihood(&ConjugateHyper::beta(a, b), x)
            .unwrap();
        worst[0] = worst[0].max((got - oracle).abs());

        let (shape, rate) = (rng.random_range(0.2..5.0), rng.random_range(0.2..5.0));
        let k = rng.random_range(0..20u64);
        // λ = θ/(1 − θ), dλ = dθ/(1 − θ)²
        let gamma = |lo: f64, hi: f64| {
            let lam = lo / hi;
            ((shape - 1.0) * lam.ln() - rate * lam).exp() / (hi * hi)
        };
        let pois = |lam: f64| (k as f64 * lam.ln() - lam - ln_fact(k)).exp();
        let oracle = integrate_unit(|lo, hi| pois(lo / hi) * gamma(lo, hi)) / integrate_unit(gamma);
        let got = ConjugatePair::GammaPoisson
            .integrated_likelihood(&ConjugateHyper::gamma(shape, rate), k as f64)
            .unwrap();
        worst[1] = worst[1].max((got - oracle).abs());

        let (m, tau2, s2): (f64, f64, f64) = (
            rng.random_range(-3.0..3.0),
            rng.random_range(0.1..4.0),
            rng.random_range(0.1..4.0),
        );
        let y = rng.random_range(-5.0..5.0);
        let normal = |v: f64, mean: f64, var: f64| {
            (-(v - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        };
        let oracle = integrate_real(|z| {
            let mu = m + tau2.sqrt() * z;
            normal(y, mu, s2) * normal(z, 0.0, 1.0)
        });
        let got = ConjugatePair::NormalNormal { variance: s2 }
            .integrated_likelihood(&ConjugateHyper::normal(m, tau2, s2), y)
            .unwrap();
        worst[2] = worst[2].max((got - oracle).abs());
    }
    let pass = worst.iter().all(|&e| e <= 1e-6);
    outcome(pass, format!("max |error| beta-bernoulli {:.1e}, gamma-poisson {:.1e}, normal-normal {:.1e} (limit 1e-6)", worst[0], worst[1], worst[2]))
}

fn eb_grid() -> Outcome {
    let sigma2: f64 = 0.2;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = rng_for(202, &[seed]);
        let lambda2: f64 = if seed % 5 == 0 {
            0.0
        } else {
            rng.random_range(0.0..0.3)
        };
        let data: Vec<f64> = (0..200)
            .map(|_| {
                let mu = lambda2.sqrt() * rng.sample::<f64, _>(StandardNormal);
                mu + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let fitted = robustify::conjugate::fit_gaussian_mean_eb(&data, sigma2)
            .unwrap()
            .lambda2;
        let second: f64 = data.iter().map(|x| x * x).sum::<f64>() / data.len() as f64;
        let upper = 1.5 * second;
        let loglik = |l2: f64| -> f64 {
            let var = sigma2 + l2;
            data.iter().map(|x| -0.5 * (var.ln() + x * x / var)).sum()
        };
        let best = (0..10_000)
            .map(|i| upper * i as f64 / 9_999.0)
            .max_by(|a, b| loglik(*a).total_cmp(&loglik(*b)))
            .unwrap();
        worst = worst.max((fitted - best).abs());
    }
    outcome(
        worst <= 1e-4,
        format!("max |λ² − grid argmax| {worst:.1e} over 20 datasets (limit 1e-4)"),
    )
}

// ---------- regression data ----------

fn design(rng: &mut impl Rng, n: usize, d: usize, half_width: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, d + 1, |_, j| {
        if j == d {
            1.0
        } else {
            rng.random_range(-half_width..half_width)
        }
    })
}

fn normal_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn linear_predictor(x: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum())
        .collect()
}

fn draw_response(rng: &mut impl Rng, family: Family, eta: f64) -> f64 {
    match family {
        Family::Bernoulli => (rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())) as u8 as f64,
        Family::Poisson => Poisson::new(eta.exp()).unwrap().sample(rng),
        Family::GaussianKnownVariance { variance } => {
            variance * eta + variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
        }
        Family::Categorical { .. } => unreachable!(),
    }
}

/// Draws from the robust GLM: `ηᵢ ~ N(wᵀxᵢ, λ²)`, `yᵢ ~ ExpFam(ηᵢ)`.
fn robust_data(
    seed: u64,
    family: Family,
    n: usize,
    d: usize,
    lambda2: f64,
    half_width: f64,
) -> (RegressionDataset, Vec<f64>) {
    let mut rng = rng_for(seed, &[]);
    let x = design(&mut rng, n, d, half_width);
    let w = normal_vec(&mut rng, d + 1);
    let y = linear_predictor(&x, &w)
        .into_iter()
        .map(|m| {
            let eta = m + lambda2.sqrt() * rng.sample::<f64, _>(StandardNormal);
            draw_response(&mut rng, family, eta)
        })
        .collect();
    (RegressionDataset::new(x, y).unwrap(), w)
}

fn min_step(trace: &[f64]) -> f64 {
    trace
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

fn em_monotonicity() -> Outcome {
    let (mut t_worst, mut nb_worst, mut elbo_worst) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for seed in 0..20u64 {
        let mut rng = rng_for(303, &[seed]);
        let x = design(&mut rng, 500, 5, 2.0);
        let w = normal_vec(&mut rng, 6);
        let t3 = rand_distr::StudentT::new(3.0).unwrap();
        let y: Vec<f64> = linear_predictor(&x, &w)
            .into_iter()
            .map(|m| m + t3.sample(&mut rng))
            .collect();
        let fit = fit_student_t_regression(
            &RegressionDataset::new(x, y).unwrap(),
            &StudentTConfig::default(),
        )
        .unwrap();
        t_worst = t_worst.min(min_step(&fit.loglik_trace));

        let x = design(&mut rng, 500, 5, 0.5);
        let w = normal_vec(&mut rng, 6);
        let y: Vec<f64> = linear_predictor(&x, &w)
            .into_iter()
            .map(|m| {
                let eps: f64 = Gamma::new(2.0, 0.5).unwrap().sample(&mut rng);
                Poisson::new(m.exp() * eps).unwrap().sample(&mut rng)
            })
            .collect();
        let fit = fit_negative_binomial(
            &RegressionDataset::new(x, y).unwrap(),
            &NegBinConfig::default(),
        )
        .unwrap();
        nb_worst = nb_worst.min(min_step(&fit.loglik_trace));

        for family in [Family::Poisson, Family::Bernoulli] {
            let (data, _) = robust_data(derive_seed(304, &[seed]), family, 500, 5, 0.5, 1.0);
            let fit = fit_robust_glm(&data, family, &RobustGlmConfig::default()).unwrap();
            for pair in fit.elbo_trace.windows(2) {
                elbo_worst = elbo_worst.max((pair[0] - pair[1]) / pair[0].abs());
            }
        }
    }
    let pass = t_worst >= -1e-9 && nb_worst >= -1e-9 && elbo_worst <= 1e-3;
    outcome(
        pass,
        format!(
            "smallest log-likelihood step t {t_worst:.1e}, nb {nb_worst:.1e} (slack 1e-9); largest relative ELBO drop {elbo_worst:.1e} (limit 1e-3)"
        ),
    )
}

fn nesting() -> Outcome {
    let mut worst = [0.0f64; 3];
    let families = [Family::gaussian(1.0), Family::Bernoulli, Family::Poisson];
    for (f, &family) in families.iter().enumerate() {
        for seed in 0..10u64 {
            let (data, _) = robust_data(
                derive_seed(404, &[f as u64, seed]),
                family,
                500,
                5,
                0.0,
                1.0,
            );
            let standard = fit_standard_glm(&data, family, &IrlsConfig::default()).unwrap();
            let config = RobustGlmConfig {
                freeze_lambda2: Some(1e-12),
                ..RobustGlmConfig::default()
            };
            let robust = fit_robust_glm(&data, family, &config).unwrap();
            let gap = standard
                .w
                .iter()
                .zip(&robust.w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst[f] = worst[f].max(gap);
        }
    }
    outcome(
        worst.iter().all(|&g| g <= 1e-4),
        format!("max |ŵ_robust − ŵ_standard| gaussian {:.1e}, bernoulli {:.1e}, poisson {:.1e} (limit 1e-4)", worst[0], worst[1], worst[2]),
    )
}

fn self_recovery() -> Outcome {
    let cases = [
        (Family::gaussian(1.0), 0.5),
        (Family::Bernoulli, 1.0),
        (Family::Poisson, 0.25),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (f, &(family, lambda2)) in cases.iter().enumerate() {
        let (mut w_ok, mut l2_ok, mut both) = (0, 0, 0);
        for seed in 0..20u64 {
            let (data, w) = robust_data(
                derive_seed(505, &[f as u64, seed]),
                family,
                2000,
                5,
                lambda2,
                1.0,
            );
            let Ok(fit) = fit_robust_glm(&data, family, &RobustGlmConfig::default()) else {
                continue;
            };
            let mse = w
                .iter()
                .zip(&fit.w)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / w.len() as f64;
            let (a, b) = (mse <= 0.05, (fit.lambda2 - lambda2).abs() <= 0.3 * lambda2);
            w_ok += a as usize;
            l2_ok += b as usize;
            both += (a && b) as usize;
        }
        pass &= both >= 18;
        parts.push(format!(
            "{} {both}/20 (w {w_ok}, λ² {l2_ok})",
            family.name()
        ));
    }
    outcome(
        pass,
        format!(
            "seeds with MSE ≤ 0.05 and λ̂² within 30%: {} (need 18/20 each)",
            parts.join(", ")
        ),
    )
}

// ---------- simulation trends ----------

const SIM_SEED: u64 = 0;
const SIM_REPS: usize = 50;

fn sim_records(kind: ModelKind, levels: &[f64]) -> Vec<MetricRecord> {
    let base = SimSpec {
        reps: SIM_REPS,
        ..SimSpec::new(kind, levels[0], SIM_SEED)
    };
    run_grid(
        &base,
        levels,
        &SimModel::for_kind(kind),
        &FitSettings::default(),
    )
    .unwrap()
    .0
}

fn value(
    records: &[MetricRecord],
    model: &str,
    level: f64,
    rep: usize,
    metric: Metric,
) -> Option<f64> {
    records
        .iter()
        .find(|r| {
            r.model == model && r.noise_level == level && r.run_id == rep && r.metric == metric
        })
        .and_then(|r| r.value)
}

/// Reps at `level` where `robust` beats every baseline on `metric`.
fn wins(
    records: &[MetricRecord],
    level: f64,
    metric: Metric,
    robust: &str,
    baselines: &[&str],
) -> usize {
    (0..SIM_REPS)
        .filter(|&rep| {
            let Some(r) = value(records, robust, level, rep, metric) else {
                return false;
            };
            baselines
                .iter()
                .all(|b| value(records, b, level, rep, metric).is_some_and(|v| r < v))
        })
        .count()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn linear_trend() -> Outcome {
    let levels = ModelKind::Linear.default_grid();
    let records = sim_records(ModelKind::Linear, &levels);
    let mut pass = true;
    let mut parts = Vec::new();
    for &k in levels.iter().filter(|&&k| k >= 2.0) {
        let w = wins(&records, k, Metric::ParamMse, "robust_linear", &["ols"]);
        pass &= w * 5 >= SIM_REPS * 4;
        parts.push(format!("k={k}: {w}/50"));
    }
    let med = |m: &str| {
        median(
            (0..SIM_REPS)
                .filter_map(|r| value(&records, m, 0.0, r, Metric::ParamMse))
                .collect(),
        )
    };
    let (mr, mo) = (med("robust_linear"), med("ols"));
    let rel = (mr - mo).abs() / mr.max(mo);
    pass &= rel <= 0.15;
    outcome(
        pass,
        format!("robust param MSE wins {} (need 40/50); k=0 medians {mr:.3e} vs {mo:.3e}, gap {:.1}% (limit 15%)", parts.join(", "), 100.0 * rel),
    )
}

fn trend(
    kind: ModelKind,
    min_level: f64,
    robust: &str,
    baselines: &[&str],
    need: usize,
) -> Outcome {
    let levels: Vec<f64> = kind
        .default_grid()
        .into_iter()
        .filter(|&l| l >= min_level - 1e-12)
        .collect();
    let records = sim_records(kind, &levels);
    let mut pass = true;
    let mut parts = Vec::new();
    for &l in &levels {
        let w = wins(&records, l, Metric::NegPredLoglik, robust, baselines);
        pass &= w >= need;
        parts.push(format!("{l}: {w}/50"));
    }
    outcome(
        pass,
        format!(
            "{robust} test neg_pred_loglik wins {} (need {need}/50)",
            parts.join(", ")
        ),
    )
}

fn logistic_trend() -> Outcome {
    trend(
        ModelKind::Logistic,
        0.1,
        "robust_logistic",
        &["logistic"],
        38,
    )
}

fn poisson_trend() -> Outcome {
    trend(
        ModelKind::Poisson,
        0.5,
        "robust_poisson",
        &["poisson", "nb"],
        35,
    )
}

fn poisson_moments() -> Outcome {
    const DRAWS: usize = 1_000_000;
    let mut rng = rng_for(909, &[]);
    let std_normal = StatrsNormal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mu: f64 = rng.random_range(-1.0..1.0);
        let lambda2: f64 = rng.random_range(0.0..1.0);
        let mean = (mu + 0.5 * lambda2).exp();
        let var = mean + lambda2.exp_m1() * (2.0 * mu + lambda2).exp();
        let model = RobustGlmModel {
            w: vec![mu],
            lambda2,
            family: Family::Poisson,
            elbo_trace: vec![0.0],
            iterations: 0,
            converged: true,
            effectively_non_robust: false,
            elbo_drop_flagged: false,
            separation: false,
            expectation_path: ExpectationPath::Exact,
            q: Vec::new(),
        };
        let p = model.predict(&[1.0]).unwrap();
        // stratified draws of the latent natural parameter
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..DRAWS {
            let u = (i as f64 + rng.random::<f64>()) / DRAWS as f64;
            let eta = mu + lambda2.sqrt() * std_normal.inverse_cdf(u);
            let y: f64 = Poisson::new(eta.exp()).unwrap().sample(&mut rng);
            s1 += y;
            s2 += y * y;
        }
        let mc_mean = s1 / DRAWS as f64;
        let mc_var = (s2 - DRAWS as f64 * mc_mean * mc_mean) / (DRAWS as f64 - 1.0);
        for (formula, mc) in [
            (mean, mc_mean),
            (var, mc_var),
            (p.mean, mc_mean),
            (p.variance, mc_var),
        ] {
            worst = worst.max((formula - mc).abs() / mc);
        }
    }
    outcome(
        worst <= 0.01,
        format!(
            "max relative gap to 10^6-draw Monte Carlo {:.2}% over 10 settings (limit 1%)",
            100.0 * worst
        ),
    )
}

fn lda_trend() -> Outcome {
    use rayon::prelude::*;
    let seeds = 5usize;
    let topics = [3usize, 5, 8];
    let corpora: Vec<_> = (0..seeds)
        .map(|rep| lda_corpora(derive_seed(SIM_SEED, &[rep as u64])).unwrap())
        .collect();
    let cells: Vec<(usize, usize, LdaMode)> = (0..seeds)
        .flat_map(|rep| {
            topics
                .iter()
                .flat_map(move |&k| [LdaMode::Standard, LdaMode::Robust].map(|m| (rep, k, m)))
        })
        .collect();
    let scores: Vec<((usize, usize, LdaMode), Option<f64>)> = cells
        .par_iter()
        .map(|&(rep, k, mode)| {
            let config = LdaConfig {
                seed: derive_seed(SIM_SEED, &[rep as u64]),
                ..LdaConfig::default()
            };
            let (train, test) = &corpora[rep];
            (
                (rep, k, mode),
                fit_and_score(rep, train, test, k, mode, &config, 0.5)
                    .value
                    .map(|v| -v),
            )
        })
        .collect();
    let get = |rep, k, mode| {
        scores
            .iter()
            .find(|(c, _)| *c == (rep, k, mode))
            .and_then(|(_, v)| *v)
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for &k in &topics {
        let gaps: Vec<f64> = (0..seeds)
            .filter_map(|rep| Some(get(rep, k, LdaMode::Robust)? - get(rep, k, LdaMode::Standard)?))
            .collect();
        let good = gaps.iter().filter(|&&g| g >= 0.01).count();
        pass &= good >= 4;
        let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        parts.push(format!("K={k}: {good}/5 (min gap {lo:.3})"));
    }
    outcome(
        pass,
        format!(
            "seeds where rlda beats lda by ≥ 0.01 nats/word: {} (need 4/5)",
            parts.join(", ")
        ),
    )
}

// ---------- gradients ----------

/// Richardson-extrapolated central difference.
fn fd(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * x.abs().max(1.0);
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Largest `|analytic − numeric| / ‖analytic‖∞`.
fn rel_gap(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .fold(0.0f64, |m, g| m.max(g.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max)
}

fn gradient_suite() -> Outcome {
    let mut rng = rng_for(1111, &[]);
    let mut worst = [0.0f64; 3];
    for _ in 0..20 {
        let cases: [(ConjugatePair, ConjugateHyper, Vec<f64>); 3] = [
            (
                ConjugatePair::BetaBernoulli,
                ConjugateHyper::beta(rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)),
                (0..30).map(|_| rng.random_range(0..2u32) as f64).collect(),
            ),
            (
                ConjugatePair::GammaPoisson,
                ConjugateHyper::gamma(rng.random_range(0.5..4.0), rng.random_range(0.5..4.0)),
                (0..30).map(|_| rng.random_range(0..10u32) as f64).collect(),
            ),
            (
                ConjugatePair::NormalNormal { variance: 1.5 },
                ConjugateHyper::normal(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.3..3.0),
                    1.5,
                ),
                (0..30).map(|_| rng.random_range(-4.0..4.0)).collect(),
            ),
        ];
        for (pair, h, data) in &cases {
            let g = pair.marginal_loglik_grad(h, data).unwrap();
            let n1 = fd(
                &|a| {
                    pair.marginal_loglik(&ConjugateHyper::new(a, h.alpha2), data)
                        .unwrap()
                },
                h.alpha1,
            );
            let n2 = fd(
                &|a| {
                    pair.marginal_loglik(&ConjugateHyper::new(h.alpha1, a), data)
                        .unwrap()
                },
                h.alpha2,
            );
            worst[0] = worst[0].max(rel_gap(&g, &[n1, n2]));
        }

        let (n, d) = (40, 3);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5));
        let q: Vec<VariationalGaussian> = (0..n)
            .map(|_| VariationalGaussian {
                m: rng.random_range(-2.0..2.0),
                v: rng.random_range(0.05..1.0),
            })
            .collect();
        let w = normal_vec(&mut rng, d);
        let log_l2: f64 = rng.random_range(-2.0..1.0);
        let g = mstep_objective_grad(&q, &x, &w, log_l2);
        let mut numeric: Vec<f64> = (0..d)
            .map(|j| {
                fd(
                    &|v| {
                        let mut w2 = w.clone();
                        w2[j] = v;
                        mstep_objective(&q, &x, &w2, log_l2.exp())
                    },
                    w[j],
                )
            })
            .collect();
        numeric.push(fd(&|u| mstep_objective(&q, &x, &w, u.exp()), log_l2));
        worst[1] = worst[1].max(rel_gap(&g, &numeric));

        let v = 12;
        let eta: Vec<f64> = (0..v).map(|_| rng.random_range(0.05..5.0)).collect();
        let stats: Vec<f64> = (0..v).map(|_| -rng.random_range(0.5..6.0)).collect();
        let g = dirichlet_objective_grad_log(&eta, &stats, 10.0);
        let numeric: Vec<f64> = (0..v)
            .map(|j| {
                fd(
                    &|u| {
                        let mut e = eta.clone();
                        e[j] = u.exp();
                        dirichlet_objective(&e, &stats, 10.0)
                    },
                    eta[j].ln(),
                )
            })
            .collect();
        worst[2] = worst[2].max(rel_gap(&g, &numeric));
    }
    outcome(
        worst.iter().all(|&e| e <= 1e-6),
        format!(
            "max relative gap marginal likelihood in α {:.1e}, M-step in (w, log λ²) {:.1e}, Dirichlet in log η {:.1e} (limit 1e-6)",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------- determinism ----------

fn robustify(threads: &str, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_robustify"))
        .env("ROBUSTIFY_THREADS", threads)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn write_dataset(path: &Path, data: &RegressionDataset) {
    let d = data.d();
    let mut text: String = (1..=d).map(|j| format!("x{j},")).collect::<String>() + "y\n";
    for i in 0..data.n() {
        for j in 0..d {
            text += &format!("{},", data.x[(i, j)]);
        }
        text += &format!("{}\n", data.y[i]);
    }
    std::fs::write(path, text).unwrap();
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let corpus = p("corpus.txt");
    assert!(robustify(
        "1",
        &["lda", "gen", "--docs", "60", "--seed", "4", "--out", &corpus]
    ));
    for kind in [ModelKind::Linear, ModelKind::Logistic, ModelKind::Poisson] {
        let data =
            robustify::sim::generate(&SimSpec::new(kind, kind.default_grid()[2], 4), 0).unwrap();
        write_dataset(Path::new(&p(&format!("{}.csv", kind.name()))), &data.train);
    }
    let mut jobs: Vec<(String, Vec<String>)> = Vec::new();
    for kind in ["linear", "logistic", "poisson"] {
        jobs.push((
            format!("simulate {kind}"),
            [
                "simulate",
                "--model",
                kind,
                "--noise-grid",
                "0,0.5",
                "--reps",
                "4",
                "--seed",
                "3",
                "--out",
                "OUT",
            ]
            .map(String::from)
            .to_vec(),
        ));
    }
    for model in SimModel::ALL {
        let data = p(&format!("{}.csv", model.kind().name()));
        jobs.push((
            format!("fit {model}"),
            vec![
                "fit".into(),
                data,
                "--model".into(),
                model.name().into(),
                "--out".into(),
                "OUT".into(),
            ],
        ));
    }
    for mode in ["standard", "robust"] {
        jobs.push((
            format!("lda fit {mode}"),
            [
                "lda",
                "fit",
                &corpus,
                "--mode",
                mode,
                "--topics",
                "4",
                "--max-iters",
                "15",
                "--out",
                "OUT",
            ]
            .map(String::from)
            .to_vec(),
        ));
    }
    jobs.push((
        "lda eval".into(),
        [
            "lda",
            "eval",
            &corpus,
            "--topics",
            "4",
            "--max-iters",
            "10",
            "--out",
            "OUT",
        ]
        .map(String::from)
        .to_vec(),
    ));
    let mut mismatched = Vec::new();
    for (i, (name, args)) in jobs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (r, threads) in ["1", "1", "4", "4"].iter().enumerate() {
            let out = p(&format!("job{i}_{r}"));
            let args: Vec<&str> = args
                .iter()
                .map(|a| if a == "OUT" { out.as_str() } else { a.as_str() })
                .collect();
            if !robustify(threads, &args) {
                mismatched.push(format!("{name} (command failed)"));
                break;
            }
            outputs.push(std::fs::read(&out).unwrap());
        }
        if outputs.len() == 4 && outputs.iter().any(|o| *o != outputs[0]) {
            mismatched.push(name.clone());
        }
    }
    let fig = p("fig");
    let mut figs = Vec::new();
    for threads in ["1", "4"] {
        let ok = robustify(
            threads,
            &[
                "reproduce",
                "lda",
                "--reps",
                "2",
                "--topics",
                "3",
                "--max-iters",
                "5",
                "--out",
                &fig,
            ],
        );
        figs.push(ok.then(|| {
            std::fs::read(Path::new(&fig).join("figure_lda_neg_pred_loglik.csv")).unwrap()
        }));
    }
    if figs[0].is_none() || figs[0] != figs[1] {
        mismatched.push("reproduce lda".into());
    }
    let total = jobs.len() + 1;
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{total} commands byte-identical across reruns and 1 vs 4 threads")
        } else {
            format!("not reproducible: {}", mismatched.join(", "))
        },
    )
}
