//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DgffError {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("size budget exceeded: {0}")]
    SizeBudget(String),

    #[error("precision error: {0}")]
    Precision(String),

    /// Estimator cannot run on the given data. `max_usable_z` is the largest
    /// threshold that still has enough exceedances, when one exists.
    #[error("statistics error: {message} (max usable z: {max_usable_z:?})")]
    Statistics {
        message: String,
        max_usable_z: Option<f64>,
    },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("refinement error: {0}")]
    Refinement(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl DgffError {
    pub fn statistics(message: impl Into<String>, max_usable_z: Option<f64>) -> Self {
        DgffError::Statistics {
            message: message.into(),
            max_usable_z,
        }
    }

    /// Stable machine-readable kind tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            DgffError::InvalidPartition(_) => "invalid-partition",
            DgffError::Domain(_) => "domain",
            DgffError::SizeBudget(_) => "size-budget",
            DgffError::Precision(_) => "precision",
            DgffError::Statistics { .. } => "statistics",
            DgffError::Calibration(_) => "calibration",
            DgffError::Numeric(_) => "numeric",
            DgffError::Refinement(_) => "refinement",
            DgffError::Parameter(_) => "parameter",
            DgffError::Format(_) => "format",
            DgffError::Io(_) => "io",
        }
    }
}
