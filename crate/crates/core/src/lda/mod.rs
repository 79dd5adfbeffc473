//! Standard LDA and its localized (bursty) variant, where every document
//! draws its own topics `β_dk ~ Dir(η_k)` around corpus-wide parameters.

mod corpus;
mod estep;
mod fit;
mod generate;
mod heldout;
mod model;
mod mstep;

pub use corpus::{parse_vocabulary, Corpus, Document};
pub use estep::{dirichlet_expectation, estep_document, DocVariational};
pub use fit::fit;
pub use generate::{generate_bursty_corpus, sample_dirichlet, BurstySpec};
pub use heldout::{document_predictive, heldout_perword_loglik, split_document, HeldoutResult};
pub use model::{EstepConfig, LdaConfig, LdaMode, TopicModelState};
pub use mstep::{
    dirichlet_objective, dirichlet_objective_grad, dirichlet_objective_grad_log, mstep_eta,
    DirichletFit, ETA_FLOOR,
};
