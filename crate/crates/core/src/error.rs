use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation, augmentation and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("coil count mismatch: expected {expected}, got {found}")]
    CoilMismatch { expected: usize, found: usize },

    #[error("crop {requested:?} exceeds input {input:?}")]
    CropExceedsInput {
        requested: (usize, usize),
        input: (usize, usize),
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible mask: {center} center lines exceed the budget of {budget:.3} lines")]
    InfeasibleMask { center: usize, budget: f64 },

    #[error("degenerate affine transform (|det| = {det:e})")]
    DegenerateTransform { det: f64 },

    #[error("insufficient samples: need at least {required}, got {found}")]
    InsufficientSamples { required: usize, found: usize },

    #[error("sensitivity maps are required for this mode")]
    MissingSensitivities,

    #[error("objective diverged at iteration {iteration} after {halvings} step halvings")]
    Divergence { iteration: usize, halvings: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
