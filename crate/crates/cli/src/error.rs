use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ALL_FAILED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error in {path}: {detail}")]
    Data { path: PathBuf, detail: String },
    #[error("column {column} in {path}: expected {expected}")]
    Schema {
        path: PathBuf,
        column: usize,
        expected: String,
    },
    #[error("model {model} cannot be used with {what}")]
    ModelMismatch { model: String, what: String },
    #[error("every fit failed ({failures} failures)")]
    AllFailed { failures: usize },
    #[error("{0}")]
    Core(#[from] robustify::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use robustify::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data { .. } | CliError::Schema { .. } | CliError::ModelMismatch { .. } => {
                EXIT_DATA
            }
            CliError::AllFailed { .. } => EXIT_ALL_FAILED,
            CliError::Core(E::InvalidParameter { .. }) => EXIT_CONFIG,
            CliError::Core(
                E::InvalidData { .. }
                | E::EmptyData
                | E::DimensionMismatch { .. }
                | E::Parse { .. }
                | E::RankDeficient { .. },
            ) => EXIT_DATA,
            CliError::Core(_) | CliError::Io { .. } | CliError::Other(_) => EXIT_OTHER,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        CliError::Data {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
