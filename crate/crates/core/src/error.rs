use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode index {0}, expected 1..=4")]
    InvalidMode(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank {rank} out of range 1..={max} ({what})")]
    Rank {
        rank: usize,
        max: usize,
        what: &'static str,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("Cholesky factorization failed after regularization; retry with the eigen method or a larger epsilon")]
    CholeskyBreakdown,

    #[error("square root factor is singular; increase epsilon")]
    SingularRoot,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("original kernel has zero norm")]
    ZeroNorm,

    #[error("weights must be non-negative")]
    NegativeWeights,

    #[error("weights are all zero")]
    AllZeroWeights,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("npy format error in {path}: {msg}")]
    Npy { path: PathBuf, msg: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("layer `{0}` needs a patches_file or sigma_file under the sigma norm")]
    MissingSigma(String),

    #[error("layer `{layer}` failed: {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<Error>,
    },

    #[error("verification failed: {0}")]
    Verify(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::CholeskyBreakdown
            | Error::SingularRoot
            | Error::NonFinite(_)
            | Error::ZeroNorm
            | Error::Verify(_) => true,
            Error::Layer { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
