use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdaMode {
    /// Shared topics `β_k`, estimated as point values.
    Standard,
    /// Per-document topics `β_dk ~ Dir(η_k)`.
    Robust,
}

impl LdaMode {
    pub fn name(&self) -> &'static str {
        match self {
            LdaMode::Standard => "standard",
            LdaMode::Robust => "robust",
        }
    }
}

/// Fitted topic model.
///
/// `eta` is K×V row-major. In robust mode row `k` holds the Dirichlet
/// parameters `η_k`; in standard mode it holds the normalized topic `β_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelState {
    pub k: usize,
    pub vocab_size: usize,
    pub eta: Vec<f64>,
    pub alpha: f64,
    pub mode: LdaMode,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of `η` entries clamped at the floor in the last M-step.
    pub eta_floor_hits: usize,
}

impl TopicModelState {
    /// A state with the given topic matrix and no fitting history.
    pub fn new(
        k: usize,
        vocab_size: usize,
        eta: Vec<f64>,
        alpha: f64,
        mode: LdaMode,
    ) -> Result<Self> {
        let state = TopicModelState {
            k,
            vocab_size,
            eta,
            alpha,
            mode,
            elbo_trace: Vec::new(),
            iterations: 0,
            converged: false,
            eta_floor_hits: 0,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.vocab_size == 0 {
            return Err(Error::param("topic_model", "K and V must be positive"));
        }
        if self.eta.len() != self.k * self.vocab_size {
            return Err(Error::DimensionMismatch {
                expected: self.k * self.vocab_size,
                got: self.eta.len(),
            });
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(
                "topic_model",
                format!("alpha must be positive, got {}", self.alpha),
            ));
        }
        if let Some(i) = self.eta.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::param(
                "topic_model",
                format!("entry {i} of eta is not positive"),
            ));
        }
        Ok(())
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.eta[k * self.vocab_size..(k + 1) * self.vocab_size]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstepConfig {
    /// Relative per-document ELBO change that ends the inner loop.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for EstepConfig {
    fn default() -> Self {
        EstepConfig {
            tol: 1e-6,
            max_sweeps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    /// Symmetric proportions Dirichlet; `None` uses `1/K`.
    pub alpha: Option<f64>,
    pub fit_alpha: bool,
    /// Relative corpus ELBO change that ends the EM loop.
    pub em_tol: f64,
    pub em_max_iters: usize,
    pub estep: EstepConfig,
    /// Total mass of each initial `η_k`; `None` uses `100·V/K`.
    pub init_scale: Option<f64>,
    /// Pseudo-count added to topic-word counts in the standard M-step.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            alpha: None,
            fit_alpha: false,
            em_tol: 1e-5,
            em_max_iters: 100,
            estep: EstepConfig::default(),
            init_scale: None,
            smoothing: 0.01,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.alpha.is_some_and(|a| !positive(a))
            || !positive(self.em_tol)
            || self.em_max_iters == 0
            || !positive(self.estep.tol)
            || self.estep.max_sweeps == 0
            || self.init_scale.is_some_and(|c| !positive(c))
            || !positive(self.smoothing)
        {
            return Err(Error::param("lda_config", format!("{self:?}")));
        }
        Ok(())
    }
}
