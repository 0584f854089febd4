use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic in {0}")]
    BadMagic(PathBuf),

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("bag size overflow: {n} x {d}")]
    SizeOverflow { n: u64, d: u64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("perplexity bisection failed to converge for row {row}")]
    Calibration { row: usize },

    #[error("non-finite t-SNE update at iteration {iter}")]
    Divergence { iter: usize },

    #[error("silhouette undefined: {0}")]
    SilhouetteUndefined(String),

    #[error("no same-center neighbors")]
    NoSameCenterNeighbors,

    #[error("degenerate cosine: {0}")]
    DegenerateCosine(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
