use thiserror::Error;

use crate::metrics::StochasticityReport;
use crate::SquareMatrix;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not doubly stochastic within {tolerance:e}: {report:?}")]
    NotDoublyStochastic {
        tolerance: f64,
        report: StochasticityReport,
    },

    #[error("zero rank variance; Spearman correlation is undefined")]
    ZeroRankVariance,

    #[error("projection did not converge after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        last_iterate: Box<SquareMatrix>,
        report: StochasticityReport,
    },

    #[error("matrix remained rank deficient after {restarts} noise injections")]
    RankDeficient { restarts: usize },

    #[error("infeasible query: {0}")]
    Infeasible(String),

    #[error("operator failed on grid element {index}: {source}")]
    OperatorFailed {
        index: u64,
        input: Box<SquareMatrix>,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),
}
