use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter for {family}: {detail}")]
    InvalidParameter { family: String, detail: String },

    #[error("invalid datum at index {index}: {detail}")]
    InvalidData { index: usize, detail: String },

    #[error("empty data")]
    EmptyData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank-deficient design: column(s) {columns:?} are collinear with earlier columns")]
    RankDeficient { columns: Vec<usize> },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence {
        what: String,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value in document {doc} at iteration {iteration}")]
    NonFinite { doc: usize, iteration: usize },

    #[error("parse error at line {line}, byte {offset}: {detail}")]
    Parse {
        line: usize,
        offset: usize,
        detail: String,
    },
}

impl Error {
    pub(crate) fn param(family: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            family: family.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn data(index: usize, detail: impl Into<String>) -> Self {
        Error::InvalidData {
            index,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
