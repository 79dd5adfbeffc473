use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::special::log_sum_exp;

/// Parameters of the bursty generative process.
///
/// Master topics are drawn `φ_k ~ Dir(master_concentration)`, each
/// document's topics `β_dk ~ Dir(burstiness·φ_k)` (or `β_dk = φ_k` when
/// `burstiness` is infinite), proportions `θ_d ~ Dir(alpha)`, and
/// `doc_length` tokens per document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstySpec {
    pub docs: usize,
    pub topics: usize,
    pub vocab: usize,
    pub burstiness: f64,
    pub alpha: f64,
    pub master_concentration: f64,
    pub doc_length: usize,
    pub seed: u64,
}

impl Default for BurstySpec {
    fn default() -> Self {
        BurstySpec {
            docs: 100,
            topics: 5,
            vocab: 200,
            burstiness: 20.0,
            alpha: 0.5,
            master_concentration: 0.1,
            doc_length: 100,
            seed: 0,
        }
    }
}

/// Draws from `Dir(params)` in log space, so tiny parameters do not
/// underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, params: &[f64]) -> Vec<f64> {
    // G(a) = G(a + 1)·U^{1/a}
    let logs: Vec<f64> = params
        .iter()
        .map(|&a| {
            let g = Gamma::new(a + 1.0, 1.0)
                .expect("positive shape")
                .sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>();
            g.ln() + u.ln() / a
        })
        .collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

pub fn generate_bursty_corpus(spec: &BurstySpec) -> Result<Corpus> {
    let positive = |x: f64| x > 0.0 && !x.is_nan();
    if spec.docs == 0
        || spec.topics == 0
        || spec.vocab == 0
        || spec.doc_length == 0
        || !positive(spec.burstiness)
        || !positive(spec.alpha)
        || !positive(spec.master_concentration)
    {
        return Err(Error::param("bursty_corpus", format!("{spec:?}")));
    }
    let mut master_rng = rng_for(spec.seed, &[0]);
    let master: Vec<Vec<f64>> = (0..spec.topics)
        .map(|_| {
            sample_dirichlet(
                &mut master_rng,
                &vec![spec.master_concentration; spec.vocab],
            )
        })
        .collect();
    let documents = (0..spec.docs)
        .map(|d| {
            let mut rng = rng_for(spec.seed, &[1, d as u64]);
            let theta = sample_dirichlet(&mut rng, &vec![spec.alpha; spec.topics]);
            let topics: Vec<Vec<f64>> = master
                .iter()
                .map(|phi| {
                    if spec.burstiness.is_infinite() {
                        phi.clone()
                    } else {
                        let params: Vec<f64> = phi.iter().map(|p| spec.burstiness * p).collect();
                        sample_dirichlet(&mut rng, &params)
                    }
                })
                .collect();
            let topic_dist = weighted(&theta);
            let word_dists: Vec<WeightedIndex<f64>> = topics.iter().map(|b| weighted(b)).collect();
            let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
            for _ in 0..spec.doc_length {
                let z = topic_dist.sample(&mut rng);
                let w = word_dists[z].sample(&mut rng);
                *counts.entry(w as u32).or_insert(0) += 1;
            }
            Document::from_pairs(counts)
        })
        .collect();
    Corpus::new(spec.vocab, documents)
}

fn weighted(p: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(p).expect("normalized probabilities have positive mass")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repeat_rate(c: &Corpus) -> f64 {
        let tokens = c.num_tokens() as f64;
        let distinct: usize = c.documents.iter().map(Document::len).sum();
        1.0 - distinct as f64 / tokens
    }

    #[test]
    fn reproducible() {
        let spec = BurstySpec {
            docs: 20,
            seed: 42,
            ..BurstySpec::default()
        };
        let a = generate_bursty_corpus(&spec).unwrap();
        assert_eq!(a, generate_bursty_corpus(&spec).unwrap());
        assert_eq!(
            Corpus::parse_ldac(&a.to_ldac(), Some(200))
                .unwrap()
                .to_ldac(),
            a.to_ldac()
        );
        assert!(a.documents.iter().all(|d| d.total() == 100));
    }

    #[test]
    fn repeat_rate_grows_as_burstiness_falls() {
        let rate = |b: f64| -> f64 {
            (0..5)
                .map(|s| {
                    repeat_rate(
                        &generate_bursty_corpus(&BurstySpec {
                            burstiness: b,
                            seed: s,
                            ..BurstySpec::default()
                        })
                        .unwrap(),
                    )
                })
                .sum::<f64>()
                / 5.0
        };
        let rates: Vec<f64> = [1.0, 10.0, 100.0, 1e4].iter().map(|&b| rate(b)).collect();
        assert!(rates.windows(2).all(|w| w[0] > w[1]), "{rates:?}");
        // the concentration limit matches generation from the master topics
        let limit = rate(f64::INFINITY);
        assert!((rate(1e7) - limit).abs() < 0.01, "{} vs {limit}", rate(1e7));
    }

    #[test]
    fn dirichlet_sampler_handles_tiny_parameters() {
        let mut rng = rng_for(1, &[]);
        let x = sample_dirichlet(&mut rng, &[1e-4; 50]);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|v| v.is_finite() && *v >= 0.0));
        let mean: Vec<f64> = {
            let mut acc = [0.0; 3];
            for _ in 0..20000 {
                let s = sample_dirichlet(&mut rng, &[1.0, 2.0, 5.0]);
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v / 20000.0;
                }
            }
            acc.to_vec()
        };
        for (m, e) in mean.iter().zip([0.125, 0.25, 0.625]) {
            assert!((m - e).abs() < 0.01);
        }
    }
}
