use thiserror::Error;

/// Errors raised by the modeling, simulation and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("no route from {source_node} to {destination}")]
    Unreachable { source_node: String, destination: String },

    #[error("scenario id {0} out of range 1..=12")]
    UnknownScenario(usize),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient history: need {needed} bins before t0 = {t0}, have {available}")]
    InsufficientHistory {
        needed: usize,
        available: usize,
        t0: usize,
    },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("mean model is not positive at flows {flows:?} (1-based)")]
    NonPositiveMean { flows: Vec<usize> },

    #[error("circulant embedding produced a negative eigenvalue {value:e} at index {index}")]
    NegativeEigenvalue { index: usize, value: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound:e}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical routines (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::NonPositiveMean { .. }
                | Error::NegativeEigenvalue { .. }
                | Error::Quadrature { .. }
                | Error::ZeroDenominator(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
