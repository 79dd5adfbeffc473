//! Robust Bayesian modeling by localization and empirical Bayes.
//!
//! A standard model draws every observation from one shared parameter.
//! The localized model draws a fresh parameter per observation from the
//! prior and then fits the prior's hyperparameters by maximizing the
//! marginal likelihood. The crate provides:
//!
//! * [`expfam`]: exponential families, conjugate pairs, integrated likelihoods.
//! * [`conjugate`]: the localized-mean (shrinkage) and localized-variance
//!   (student's t) Gaussian models.
//! * [`laplace`]: the per-observation Laplace variational E-step.
//! * [`glm`]: robust logistic/Poisson/Gaussian GLMs fitted by variational EM,
//!   plus IRLS, negative binomial and student-t regression baselines.
//! * [`lda`]: standard and bursty (localized-topic) LDA.
//! * [`sim`]: simulation generators and evaluation metrics.

// `!(x > 0.0)` is used on purpose so NaN is rejected with the invalid values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conjugate;
pub mod error;
pub mod expfam;
pub mod glm;
pub mod laplace;
pub mod lda;
pub mod linalg;
pub mod optim;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use expfam::{ConjugateHyper, ConjugatePair, Family};
