use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("gaussian kernel scale is degenerate: all samples are identical (d_max = 0)")]
    DegenerateScale,

    #[error("kernel matrix is identically zero")]
    DegenerateKernel,

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("linear system for {system} is not positive definite: {detail}")]
    Conditioning { system: &'static str, detail: String },

    #[error("solver diverged: non-finite iterate at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no samples left to evaluate: every sample is labeled")]
    EmptyEvaluation,

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("{path}, line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
