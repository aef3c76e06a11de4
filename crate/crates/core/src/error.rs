use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum EitError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid conductivity {value} on element {element}")]
    InvalidConductivity { element: usize, value: f64 },

    #[error("incompatible Neumann data: boundary currents sum to {sum:e}")]
    Compatibility { sum: f64 },

    #[error("stiffness factorization failed at pivot {pivot}")]
    Factorization { pivot: usize },

    #[error("could not place non-overlapping inclusions after {attempts} attempts")]
    PlacementFailure { attempts: usize },

    #[error("node {index} is not on this tape")]
    InvalidNode { index: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("grid specs differ between inputs")]
    GridMismatch,

    #[error("excitation id {grid} of grid does not match excitation {expected}")]
    ExcitationMismatch { grid: u32, expected: u32 },

    #[error("non-finite loss at iteration {iteration}: {components}")]
    NonFiniteLoss { iteration: usize, components: String },

    #[error("normal equations are singular; regularization {lambda:e} too small")]
    RegularizationTooSmall { lambda: f64 },

    #[error("correlation undefined for a constant field")]
    UndefinedCorrelation,

    #[error("relative error undefined for a zero-norm reference")]
    ZeroNormReference,

    #[error("format error in {what}: {field}")]
    Format { what: String, field: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = EitError> = std::result::Result<T, E>;

impl EitError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EitError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, field: impl Into<String>) -> Self {
        EitError::Format {
            what: what.into(),
            field: field.into(),
        }
    }
}
