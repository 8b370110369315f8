use thiserror::Error;

use crate::wide::WideError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "non-positive forward rate on period {index} (discount factors must strictly decrease)"
    )]
    NonPositiveForward { index: usize },

    #[error("precision exhausted at horizon {horizon}: {source}")]
    Precision {
        horizon: usize,
        #[source]
        source: WideError,
    },

    #[error("horizon {horizon} out of range (valid: {first}..={last})")]
    HorizonOutOfRange {
        horizon: usize,
        first: usize,
        last: usize,
    },

    #[error("zero volatility: the Libor law is a point mass at the forward, not a density")]
    PointMass,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no implied volatility: price {price} outside [{lower}, {upper}]")]
    NoImpliedVol { price: f64, lower: f64, upper: f64 },

    #[error(
        "quadrature did not converge: error estimate {achieved:e} above tolerance {requested:e}"
    )]
    Quadrature { achieved: f64, requested: f64 },

    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    RootFinding { iterations: usize, residual: f64 },

    #[error(
        "maximum of the second derivative at the range boundary (psi = {psi}); widen the range"
    )]
    BoundaryMaximum { psi: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Wide(#[from] WideError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
