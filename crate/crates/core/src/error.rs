use thiserror::Error;

use crate::chebyshev::MonicPolynomial;

#[derive(Debug, Error)]
pub enum Error {
    #[error("binomial coefficient C({top}, {bottom}) overflows u64")]
    Overflow { top: usize, bottom: usize },

    #[error("direction is undefined for the zero multi-index")]
    DegenerateDirection,

    #[error("{0} is not supported for this set")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("lawson iteration stopped after {iterations} iterations without converging (grid max {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Lawson lower bound on the minimax value at the last iterate.
        lower_bound: f64,
        last: Box<MonicPolynomial>,
    },

    #[error("linear system is numerically singular: {0}")]
    RankDeficient(String),

    #[error("eigenvalue iteration failed for a matrix of order {0}")]
    EigenFailure(usize),

    #[error("root at {root} has relative residual {residual:e}")]
    RootResidual {
        root: num_complex::Complex64,
        residual: f64,
    },

    #[error("quadrature node hit an exact zero of the polynomial at {0:?} twice")]
    SingularCell(Vec<f64>),

    #[error("sample failed after {retries} retries: {source}")]
    SampleFailed {
        retries: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
