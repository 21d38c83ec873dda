//! Error type shared across the solver crates.

use std::fmt;

/// Failure modes of the solver library.
#[derive(Debug)]
pub enum Error {
    /// A vector or matrix had the wrong size for the requested operation.
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    /// A NaN or infinity appeared during evaluation.
    NonFinite { what: String },
    /// A matrix was numerically singular.
    Singular { what: String },
    /// A dense-path request exceeded the desk-scale size guard.
    DenseGuard { dim: usize, limit: usize },
    /// The iterative linear solver could not proceed.
    Solver { what: String },
    /// The preconditioner could not be factored.
    Factorization { what: String },
    /// The warm-start refinement did not reach an acceptable residual.
    Initialization { what: String },
    /// Invalid run configuration or arguments.
    Config { what: String },
    /// The requested model name is not registered.
    UnknownModel { name: String },
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                actual,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, got {actual}"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::Singular { what } => write!(f, "singular matrix in {what}"),
            Error::DenseGuard { dim, limit } => {
                write!(f, "dense dimension {dim} exceeds the guard of {limit}")
            }
            Error::Solver { what } => write!(f, "linear solver failure: {what}"),
            Error::Factorization { what } => write!(f, "preconditioner factorization failed: {what}"),
            Error::Initialization { what } => write!(f, "initialization failed: {what}"),
            Error::Config { what } => write!(f, "invalid configuration: {what}"),
            Error::UnknownModel { name } => write!(f, "unknown model '{name}'"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
