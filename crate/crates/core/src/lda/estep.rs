use serde::{Deserialize, Serialize};

use super::corpus::Document;
use super::model::{EstepConfig, LdaMode, TopicModelState};
use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, log_sum_exp};

/// Variational factors of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVariational {
    /// `q(θ_d) = Dir(γ)`.
    pub gamma: Vec<f64>,
    /// `λ_dk` over the document's terms, K×J row-major (robust mode only).
    /// Terms absent from the document have `λ_dkv = η_kv`.
    pub lambda: Vec<f64>,
    /// `Σ_v λ_dkv` over the whole vocabulary (robust mode only).
    pub lambda_sum: Vec<f64>,
    /// `q(z)` for the tokens of each distinct term, J×K row-major.
    pub phi: Vec<f64>,
    pub elbo_trace: Vec<f64>,
    pub sweeps: usize,
}

impl DocVariational {
    pub fn elbo(&self) -> f64 {
        *self.elbo_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }

    /// `q(z)` for term position `j`.
    pub fn phi_row(&self, j: usize) -> &[f64] {
        let k = self.gamma.len();
        &self.phi[j * k..(j + 1) * k]
    }
}

/// Quantities shared by every document for a fixed model state.
pub(crate) struct Prepared {
    /// `Σ_v η_kv` (robust mode).
    pub eta_sum: Vec<f64>,
    pub ln_gamma_eta_sum: Vec<f64>,
    /// `log β_kv` (standard mode).
    pub log_beta: Vec<f64>,
    pub theta_prior: f64,
}

impl Prepared {
    pub fn new(state: &TopicModelState) -> Self {
        let k = state.k as f64;
        let theta_prior = ln_gamma(k * state.alpha) - k * ln_gamma(state.alpha);
        match state.mode {
            LdaMode::Robust => {
                let eta_sum: Vec<f64> = (0..state.k).map(|t| state.row(t).iter().sum()).collect();
                let ln_gamma_eta_sum = eta_sum.iter().map(|&s| ln_gamma(s)).collect();
                Prepared {
                    eta_sum,
                    ln_gamma_eta_sum,
                    log_beta: Vec::new(),
                    theta_prior,
                }
            }
            LdaMode::Standard => Prepared {
                eta_sum: Vec::new(),
                ln_gamma_eta_sum: Vec::new(),
                log_beta: state.eta.iter().map(|b| b.ln()).collect(),
                theta_prior,
            },
        }
    }
}

/// `E[log θ_k] = ψ(γ_k) − ψ(Σγ)`.
pub fn dirichlet_expectation(param: &[f64]) -> Vec<f64> {
    let total = digamma(param.iter().sum());
    param.iter().map(|&g| digamma(g) - total).collect()
}

/// Coordinate ascent on the per-document ELBO with the model held fixed.
pub fn estep_document(
    doc: &Document,
    state: &TopicModelState,
    config: &EstepConfig,
) -> Result<DocVariational> {
    state.validate()?;
    if let Some(&t) = doc.terms.iter().find(|&&t| t as usize >= state.vocab_size) {
        return Err(Error::data(
            0,
            format!("term id {t} >= vocabulary size {}", state.vocab_size),
        ));
    }
    if doc.is_empty() {
        return Err(Error::data(0, "empty document"));
    }
    run_estep(doc, 0, state, &Prepared::new(state), config, None)
}

/// As [`estep_document`], optionally warm-started from a previous `φ`.
pub(crate) fn run_estep(
    doc: &Document,
    doc_id: usize,
    state: &TopicModelState,
    prep: &Prepared,
    config: &EstepConfig,
    warm_phi: Option<&[f64]>,
) -> Result<DocVariational> {
    let k = state.k;
    let j_n = doc.len();
    let mut q = DocVariational {
        gamma: vec![0.0; k],
        lambda: Vec::new(),
        lambda_sum: Vec::new(),
        phi: match warm_phi {
            Some(p) if p.len() == j_n * k => p.to_vec(),
            _ => vec![1.0 / k as f64; j_n * k],
        },
        elbo_trace: Vec::new(),
        sweeps: 0,
    };
    update_gamma_lambda(doc, state, prep, &mut q);
    let first = doc_elbo(doc, state, prep, &q);
    if !first.is_finite() {
        return Err(Error::NonFinite {
            doc: doc_id,
            iteration: 0,
        });
    }
    q.elbo_trace.push(first);

    let mut logits = vec![0.0; k];
    for sweep in 1..=config.max_sweeps {
        let elog_theta = dirichlet_expectation(&q.gamma);
        let psi_lambda_sum: Vec<f64> = q.lambda_sum.iter().map(|&s| digamma(s)).collect();
        for j in 0..j_n {
            let t = doc.terms[j] as usize;
            for topic in 0..k {
                let word = match state.mode {
                    LdaMode::Robust => digamma(q.lambda[topic * j_n + j]) - psi_lambda_sum[topic],
                    LdaMode::Standard => prep.log_beta[topic * state.vocab_size + t],
                };
                logits[topic] = elog_theta[topic] + word;
            }
            let lse = log_sum_exp(&logits);
            for topic in 0..k {
                q.phi[j * k + topic] = (logits[topic] - lse).exp();
            }
        }
        update_gamma_lambda(doc, state, prep, &mut q);
        q.sweeps = sweep;
        let elbo = doc_elbo(doc, state, prep, &q);
        if !elbo.is_finite() {
            return Err(Error::NonFinite {
                doc: doc_id,
                iteration: sweep,
            });
        }
        let prev = *q.elbo_trace.last().unwrap();
        q.elbo_trace.push(elbo);
        if (elbo - prev).abs() <= config.tol * prev.abs() {
            break;
        }
    }
    Ok(q)
}

fn update_gamma_lambda(
    doc: &Document,
    state: &TopicModelState,
    prep: &Prepared,
    q: &mut DocVariational,
) {
    let k = state.k;
    let j_n = doc.len();
    q.gamma.iter_mut().for_each(|g| *g = state.alpha);
    for j in 0..j_n {
        let c = doc.counts[j] as f64;
        for topic in 0..k {
            q.gamma[topic] += c * q.phi[j * k + topic];
        }
    }
    if state.mode == LdaMode::Robust {
        q.lambda.resize(k * j_n, 0.0);
        q.lambda_sum.clear();
        for topic in 0..k {
            let mut added = 0.0;
            for j in 0..j_n {
                let extra = doc.counts[j] as f64 * q.phi[j * k + topic];
                q.lambda[topic * j_n + j] =
                    state.eta[topic * state.vocab_size + doc.terms[j] as usize] + extra;
                added += extra;
            }
            q.lambda_sum.push(prep.eta_sum[topic] + added);
        }
    }
}

/// Per-document ELBO. Terms absent from the document contribute nothing to
/// the `β_dk` part because their variational and prior parameters agree.
pub(crate) fn doc_elbo(
    doc: &Document,
    state: &TopicModelState,
    prep: &Prepared,
    q: &DocVariational,
) -> f64 {
    let k = state.k;
    let j_n = doc.len();
    let elog_theta = dirichlet_expectation(&q.gamma);
    let gamma_sum: f64 = q.gamma.iter().sum();
    let mut total = prep.theta_prior - ln_gamma(gamma_sum);
    for topic in 0..k {
        total += (state.alpha - q.gamma[topic]) * elog_theta[topic] + ln_gamma(q.gamma[topic]);
    }
    let psi_lambda_sum: Vec<f64> = q.lambda_sum.iter().map(|&s| digamma(s)).collect();
    for j in 0..j_n {
        let c = doc.counts[j] as f64;
        let t = doc.terms[j] as usize;
        for topic in 0..k {
            let p = q.phi[j * k + topic];
            let word = match state.mode {
                LdaMode::Robust => digamma(q.lambda[topic * j_n + j]) - psi_lambda_sum[topic],
                LdaMode::Standard => prep.log_beta[topic * state.vocab_size + t],
            };
            if p > 0.0 {
                total += c * p * (elog_theta[topic] + word - p.ln());
            }
        }
    }
    if state.mode == LdaMode::Robust {
        for topic in 0..k {
            total += prep.ln_gamma_eta_sum[topic] - ln_gamma(q.lambda_sum[topic]);
            for j in 0..j_n {
                let lam = q.lambda[topic * j_n + j];
                let eta = state.eta[topic * state.vocab_size + doc.terms[j] as usize];
                let elog_beta = digamma(lam) - psi_lambda_sum[topic];
                total += ln_gamma(lam) - ln_gamma(eta) + (eta - lam) * elog_beta;
            }
        }
    }
    total
}
