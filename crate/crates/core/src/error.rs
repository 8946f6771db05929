//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by shape construction, geometry, kernels, and matching.
#[derive(Debug, Error)]
pub enum Error {
    /// A cell (edge or face) has measure at or below the degeneracy threshold.
    #[error("degenerate cell {cell}: measure {measure:.3e} <= threshold {threshold:.3e}")]
    DegenerateCell {
        cell: usize,
        measure: f64,
        threshold: f64,
    },

    /// A shape violates a construction invariant.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Two shapes that must share cell structure do not.
    #[error("structure mismatch: {0}")]
    StructureMismatch(String),

    /// Atom sets live in different ambient dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Signal data is inconsistent with the kernel configuration.
    #[error("signal mismatch: {0}")]
    SignalMismatch(String),

    /// An SRNF cell vector vanishes where inversion needs it.
    #[error("zero SRNF cell {cell}{}", at_parameter.map(|t| format!(" at interpolation parameter t={t}")).unwrap_or_default())]
    ZeroCell {
        cell: usize,
        at_parameter: Option<f64>,
    },

    /// The objective produced a non-finite value or gradient.
    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    /// A file could not be parsed.
    #[error("parse error at {path}:{line}: {message}")]
    ParseError {
        path: String,
        line: usize,
        message: String,
    },

    /// The requested file format is not supported.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// The operation does not apply to this kind of shape.
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    /// A distance matrix fed to MDS is not symmetric with zero diagonal.
    #[error("non-symmetric input: {0}")]
    NonSymmetricInput(String),

    /// A configuration value is out of range or inconsistent.
    #[error("config error: {0}")]
    ConfigError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable kind tag, used by error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateCell { .. } => "DegenerateCell",
            Error::InvalidShape(_) => "InvalidShape",
            Error::StructureMismatch(_) => "StructureMismatch",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::SignalMismatch(_) => "SignalMismatch",
            Error::ZeroCell { .. } => "ZeroCell",
            Error::NonFiniteValue(_) => "NonFiniteValue",
            Error::ParseError { .. } => "ParseError",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::UnsupportedShape(_) => "UnsupportedShape",
            Error::NonSymmetricInput(_) => "NonSymmetricInput",
            Error::ConfigError(_) => "ConfigError",
            Error::Io(_) => "Io",
        }
    }
}
