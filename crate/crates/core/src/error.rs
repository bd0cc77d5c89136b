use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {x} outside the domain of {what}")]
    Domain { what: &'static str, x: f64 },

    #[error("{what} overflows at order {order}, argument {x}")]
    Overflow { what: &'static str, order: i64, x: f64 },

    #[error("source point coincides with evaluation point")]
    Singularity,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("fiber solve residual {residual:e} exceeds tolerance at theta={theta}, r={r}")]
    Tolerance { theta: f64, r: f64, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("source point {point:?} lies outside the obstacle at z={z}")]
    Placement { point: [f64; 2], z: f64 },

    #[error("singular value decomposition failed to converge")]
    Svd,

    #[error("at z={z}: {source}")]
    AtParameter { z: f64, source: Box<Error> },

    #[error("{failed} of {total} realizations failed; first: {first}")]
    Realizations {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
