use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("feature range {start}..{end} outside {lo}..{hi}")]
    IndexOutOfRange {
        start: usize,
        end: usize,
        lo: usize,
        hi: usize,
    },

    #[error("Gram matrix factorization failed after jitter {jitter:e}")]
    FactorizationFailure { jitter: f64 },

    #[error("invalid feature subset: {0}")]
    InvalidSubset(String),

    #[error("n = {n} exceeds the dense eigendecomposition cap {cap}")]
    CapExceeded { n: usize, cap: usize },

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("zero contamination for class pair ({alpha}, {beta})")]
    ZeroContamination { alpha: usize, beta: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incomplete grid, missing cells: {0:?}")]
    IncompleteGrid(Vec<(f64, f64)>),

    #[error("mismatched grids: {0}")]
    MismatchedGrids(String),

    #[error("sweep finished with {} failed points", .0.len())]
    PartialFailure(Vec<String>),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::IndexOutOfRange { .. }
                | Error::InvalidSubset(_)
                | Error::CapExceeded { .. }
                | Error::InsufficientGrid(_)
                | Error::InvalidArgument(_)
                | Error::IncompleteGrid(_)
                | Error::MismatchedGrids(_)
                | Error::File { .. }
                | Error::Json(_)
        )
    }
}
