use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Document};
use super::estep::{run_estep, DocVariational, Prepared};
use super::model::{EstepConfig, LdaMode, TopicModelState};
use crate::error::{Error, Result};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldoutResult {
    /// Total log probability of the scored halves divided by their token count.
    pub per_word: f64,
    pub scored_tokens: u64,
    pub scored_docs: usize,
    /// Documents with fewer than two tokens.
    pub skipped_docs: usize,
}

/// Splits a document's tokens, shuffled by a generator seeded from
/// `(seed, doc_index)`, into an observed part of `⌈ratio·N⌉` tokens and the
/// remaining held-out tokens. Returns `None` when `N < 2`.
pub fn split_document(
    doc: &Document,
    ratio: f64,
    seed: u64,
    doc_index: usize,
) -> Option<(Document, Vec<u32>)> {
    let n = doc.total() as usize;
    if n < 2 {
        return None;
    }
    let mut tokens: Vec<u32> = doc
        .terms
        .iter()
        .zip(&doc.counts)
        .flat_map(|(&t, &c)| std::iter::repeat_n(t, c as usize))
        .collect();
    tokens.shuffle(&mut rng_for(seed, &[doc_index as u64]));
    let n_obs = ((ratio * n as f64).ceil() as usize).clamp(1, n - 1);
    let mut observed: BTreeMap<u32, u32> = BTreeMap::new();
    for &t in &tokens[..n_obs] {
        *observed.entry(t).or_insert(0) += 1;
    }
    Some((Document::from_pairs(observed), tokens[n_obs..].to_vec()))
}

/// Plug-in predictive `p(w | d) = Σ_k E[θ_dk]·E[β_dkw]` over the whole
/// vocabulary, given the factors fitted to `doc`.
pub fn document_predictive(
    state: &TopicModelState,
    doc: &Document,
    q: &DocVariational,
) -> Vec<f64> {
    let (k, v) = (state.k, state.vocab_size);
    let gamma_sum: f64 = q.gamma.iter().sum();
    let mut p = vec![0.0; v];
    for topic in 0..k {
        let theta = q.gamma[topic] / gamma_sum;
        let row = state.row(topic);
        match state.mode {
            LdaMode::Standard => {
                for (pw, b) in p.iter_mut().zip(row) {
                    *pw += theta * b;
                }
            }
            LdaMode::Robust => {
                let total = q.lambda_sum[topic];
                for (pw, e) in p.iter_mut().zip(row) {
                    *pw += theta * e / total;
                }
                let j_n = doc.len();
                for j in 0..j_n {
                    let t = doc.terms[j] as usize;
                    p[t] += theta * (q.lambda[topic * j_n + j] - row[t]) / total;
                }
            }
        }
    }
    p
}

/// Document-completion score: fit each test document's observed part with
/// the model frozen, then score its held-out tokens.
pub fn heldout_perword_loglik(
    state: &TopicModelState,
    test: &Corpus,
    split_ratio: f64,
    seed: u64,
    config: &EstepConfig,
) -> Result<HeldoutResult> {
    state.validate()?;
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::param(
            "heldout",
            format!("split ratio must be in (0, 1), got {split_ratio}"),
        ));
    }
    if test.vocab_size > state.vocab_size {
        return Err(Error::DimensionMismatch {
            expected: state.vocab_size,
            got: test.vocab_size,
        });
    }
    let prep = Prepared::new(state);
    let scores: Vec<Option<(f64, u64)>> = test
        .documents
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let Some((observed, held)) = split_document(doc, split_ratio, seed, d) else {
                return Ok(None);
            };
            let q = run_estep(&observed, d, state, &prep, config, None)?;
            let p = document_predictive(state, &observed, &q);
            let ll: f64 = held.iter().map(|&t| p[t as usize].ln()).sum();
            Ok(Some((ll, held.len() as u64)))
        })
        .collect::<Result<_>>()?;
    let (mut total, mut tokens, mut docs, mut skipped) = (0.0, 0u64, 0usize, 0usize);
    for s in scores {
        match s {
            Some((ll, n)) => {
                total += ll;
                tokens += n;
                docs += 1;
            }
            None => skipped += 1,
        }
    }
    if tokens == 0 {
        return Err(Error::Degenerate(
            "no test document has two or more tokens".into(),
        ));
    }
    Ok(HeldoutResult {
        per_word: total / tokens as f64,
        scored_tokens: tokens,
        scored_docs: docs,
        skipped_docs: skipped,
    })
}
