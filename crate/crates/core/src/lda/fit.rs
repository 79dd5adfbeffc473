use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use super::corpus::Corpus;
use super::estep::{dirichlet_expectation, run_estep, DocVariational, Prepared};
use super::model::{LdaConfig, LdaMode, TopicModelState};
use super::mstep::{mstep_eta, ETA_FLOOR};
use crate::error::{Error, Result};
use crate::optim::golden_section_max;
use crate::rng::rng_for;
use crate::special::{digamma, ln_gamma};

const INIT_STREAM: u64 = 0x1D7A;

/// Largest over-relaxation factor for the robust `η` step.
const MAX_OVERRELAX: f64 = 1024.0;
const ETA_CEILING: f64 = 1e10;

/// Variational EM for standard or robust LDA.
///
/// Each round updates the topics from the current document factors (the
/// smoothed topic-word counts in standard mode, the Dirichlet MLE for each
/// `η_k` in robust mode) and then reruns the document E-steps, warm-started
/// from the previous `φ`.
///
/// Plain EM moves a large Dirichlet concentration only a little per round,
/// so robust mode uses adaptive over-relaxation: the step from `η` to its
/// M-step update is extrapolated in `log η` by a factor that doubles after
/// every accepted round. A candidate is accepted only if the corpus bound
/// does not fall; otherwise the plain EM step is taken and the factor
/// resets to one. The recorded bound is therefore nondecreasing.
pub fn fit(
    corpus: &Corpus,
    k: usize,
    mode: LdaMode,
    config: &LdaConfig,
) -> Result<TopicModelState> {
    config.validate()?;
    if k == 0 {
        return Err(Error::param("lda", "K must be at least 1"));
    }
    if corpus.documents.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut state = initial_state(corpus, k, mode, config)?;
    let (mut qs, mut elbo) = sweep(corpus, &state, config, None)?;
    state.iterations = 1;
    state.elbo_trace.push(elbo);
    let mut factor = 1.0;
    while state.iterations < config.em_max_iters {
        let mut updated = state.clone();
        match mode {
            LdaMode::Robust => update_eta(corpus, &mut updated, &qs)?,
            LdaMode::Standard => update_beta(corpus, &mut updated, &qs, config.smoothing),
        }
        if config.fit_alpha {
            update_alpha(&mut updated, &qs);
        }
        let mut accepted = None;
        if mode == LdaMode::Robust && factor > 1.0 {
            let candidate = overrelax(&state, &updated, factor);
            let (cq, ce) = sweep(corpus, &candidate, config, Some(&qs))?;
            if ce >= elbo {
                accepted = Some((candidate, cq, ce));
            }
        }
        let (next, next_qs, next_elbo) = match accepted {
            Some(found) => {
                factor = (2.0 * factor).min(MAX_OVERRELAX);
                found
            }
            None => {
                factor = if factor > 1.0 { 1.0 } else { 2.0 };
                let (uq, ue) = sweep(corpus, &updated, config, Some(&qs))?;
                (updated, uq, ue)
            }
        };
        let prev = elbo;
        state = next;
        qs = next_qs;
        elbo = next_elbo;
        state.iterations += 1;
        state.elbo_trace.push(elbo);
        if (elbo - prev).abs() <= config.em_tol * prev.abs() {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Document E-steps in parallel, warm-started from `warm`'s `φ`, and the
/// corpus bound.
fn sweep(
    corpus: &Corpus,
    state: &TopicModelState,
    config: &LdaConfig,
    warm: Option<&[DocVariational]>,
) -> Result<(Vec<DocVariational>, f64)> {
    let prep = Prepared::new(state);
    let qs: Vec<DocVariational> = corpus
        .documents
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            run_estep(
                doc,
                d,
                state,
                &prep,
                &config.estep,
                warm.map(|w| w[d].phi.as_slice()),
            )
        })
        .collect::<Result<_>>()?;
    let mut elbo: f64 = qs.iter().map(DocVariational::elbo).sum();
    if state.mode == LdaMode::Standard {
        elbo += config.smoothing * state.eta.iter().map(|b| b.ln()).sum::<f64>();
    }
    Ok((qs, elbo))
}

/// `η_old·(η_new/η_old)^factor`, kept within `[ETA_FLOOR, ETA_CEILING]`.
fn overrelax(old: &TopicModelState, new: &TopicModelState, factor: f64) -> TopicModelState {
    let mut out = new.clone();
    for (e, (&a, &b)) in out.eta.iter_mut().zip(old.eta.iter().zip(&new.eta)) {
        *e = (a.ln() + factor * (b.ln() - a.ln()))
            .exp()
            .clamp(ETA_FLOOR, ETA_CEILING);
    }
    out.eta_floor_hits = out.eta.iter().filter(|&&e| e <= ETA_FLOOR).count();
    out
}

/// Randomized, smoothed word frequencies: `η_kv = c·p_kv + s` in robust
/// mode and `β_k = p_k` in standard mode.
fn initial_state(
    corpus: &Corpus,
    k: usize,
    mode: LdaMode,
    config: &LdaConfig,
) -> Result<TopicModelState> {
    let v = corpus.vocab_size;
    let mut freq = vec![1.0; v];
    for doc in &corpus.documents {
        for (&t, &c) in doc.terms.iter().zip(&doc.counts) {
            freq[t as usize] += c as f64;
        }
    }
    let mut rng = rng_for(config.seed, &[INIT_STREAM]);
    let scale = config.init_scale.unwrap_or(100.0 * v as f64 / k as f64);
    let mut eta = Vec::with_capacity(k * v);
    for _ in 0..k {
        let row: Vec<f64> = freq
            .iter()
            .map(|&f| {
                let e: f64 = Exp1.sample(&mut rng);
                f * e
            })
            .collect();
        let total: f64 = row.iter().sum();
        eta.extend(row.iter().map(|&r| match mode {
            LdaMode::Robust => scale * r / total + config.smoothing,
            LdaMode::Standard => r / total,
        }));
    }
    let alpha = config.alpha.unwrap_or(1.0 / k as f64);
    TopicModelState::new(k, v, eta, alpha, mode)
}

/// Document-averaged expected log topic probabilities `E[log β_dkv]`, a
/// `K×V` row-major matrix; absent terms contribute `ψ(η_kv) − ψ(Λ_dk)`.
fn eta_statistics(corpus: &Corpus, state: &TopicModelState, qs: &[DocVariational]) -> Vec<f64> {
    let (k, v) = (state.k, state.vocab_size);
    let num_docs = qs.len() as f64;
    let mut psi_lambda_sum = vec![0.0; k];
    let mut support = vec![0.0; k * v];
    for (doc, q) in corpus.documents.iter().zip(qs) {
        let j_n = doc.len();
        for topic in 0..k {
            psi_lambda_sum[topic] += digamma(q.lambda_sum[topic]);
            for j in 0..j_n {
                let idx = topic * v + doc.terms[j] as usize;
                support[idx] += digamma(q.lambda[topic * j_n + j]) - digamma(state.eta[idx]);
            }
        }
    }
    (0..k * v)
        .map(|idx| digamma(state.eta[idx]) + (support[idx] - psi_lambda_sum[idx / v]) / num_docs)
        .collect()
}

/// One Dirichlet MLE per topic.
fn update_eta(corpus: &Corpus, state: &mut TopicModelState, qs: &[DocVariational]) -> Result<()> {
    let v = state.vocab_size;
    let stats = eta_statistics(corpus, state, qs);
    let mut floor_hits = 0;
    for topic in 0..state.k {
        let range = topic * v..(topic + 1) * v;
        let fit = mstep_eta(
            &stats[range.clone()],
            qs.len() as f64,
            &state.eta[range.clone()],
        )?;
        floor_hits += fit.floor_hits;
        state.eta[range].copy_from_slice(&fit.eta);
    }
    state.eta_floor_hits = floor_hits;
    Ok(())
}

fn update_beta(
    corpus: &Corpus,
    state: &mut TopicModelState,
    qs: &[DocVariational],
    smoothing: f64,
) {
    let (k, v) = (state.k, state.vocab_size);
    let mut counts = vec![smoothing; k * v];
    for (doc, q) in corpus.documents.iter().zip(qs) {
        for (j, (&t, &c)) in doc.terms.iter().zip(&doc.counts).enumerate() {
            for topic in 0..k {
                counts[topic * v + t as usize] += c as f64 * q.phi[j * k + topic];
            }
        }
    }
    for row in counts.chunks_mut(v) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|b| *b /= total);
    }
    state.eta = counts;
}

/// Symmetric Dirichlet MLE for `α`, kept only if it improves the bound.
fn update_alpha(state: &mut TopicModelState, qs: &[DocVariational]) {
    let k = state.k as f64;
    let num_docs = qs.len() as f64;
    let stat: f64 = qs
        .iter()
        .map(|q| dirichlet_expectation(&q.gamma).iter().sum::<f64>())
        .sum();
    let objective = |log_a: f64| {
        let a = log_a.exp();
        num_docs * (ln_gamma(k * a) - k * ln_gamma(a)) + (a - 1.0) * stat
    };
    let found = golden_section_max(objective, 1e-4f64.ln(), 1e2f64.ln(), 1e-10);
    if objective(found) > objective(state.alpha.ln()) {
        state.alpha = found.exp();
    }
}
