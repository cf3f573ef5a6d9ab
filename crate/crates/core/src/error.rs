use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "covariance matrix is singular or ill-conditioned (min eigenvalue {min_eigenvalue:e} <= tolerance {tolerance:e}); \
         use a high-dimensional method (correlation or cluster graph)"
    )]
    SingularCovariance { min_eigenvalue: f64, tolerance: f64 },

    #[error("precision matrix has non-positive diagonal entry at index {index}")]
    NonPositiveDiagonal { index: usize },

    #[error("feature {index} has zero variance")]
    ZeroVariance { index: usize },

    #[error("standard error for pair ({0}, {1}) is degenerate (below 1e-12)", pair.0, pair.1)]
    DegenerateVariance { pair: (usize, usize) },

    #[error("quadratic form for pair ({0}, {1}) is negative ({value:e})", pair.0, pair.1)]
    NegativeQuadraticForm { pair: (usize, usize), value: f64 },

    #[error(
        "bootstrap gave up after {attempts} resampling attempts ({failures} degenerate); \
         the dimension is too close to the sample size for this statistic"
    )]
    TooManyDegenerateResamples { attempts: usize, failures: usize },

    #[error("uniform draws from the covariance rectangle were not positive definite ({rejected} of {drawn} rejected)")]
    AllDrawsNonPd { rejected: usize, drawn: usize },

    #[error("number of clusters {clusters} must be below half the sample size ({half})")]
    ClusterTooLarge { clusters: usize, half: usize },

    #[error("conditioning submatrix for pair ({j}, {k}) given {conditioning:?} is singular")]
    SingularSubmatrix {
        j: usize,
        k: usize,
        conditioning: Vec<usize>,
    },

    #[error("restricted statistic needs {needed} subset evaluations per replicate, over the cap of {cap}")]
    BudgetExceeded { needed: u128, cap: u128 },

    #[error(
        "finite-sample band undefined: smallest eigenvalue {lambda_hat:e} must exceed c_alpha*sqrt(D/n) = {threshold:e}; \
         D/n is too large for this method"
    )]
    BandUndefined { lambda_hat: f64, threshold: f64 },

    #[error("graphs have different node counts ({left} vs {right})")]
    NodeMismatch { left: usize, right: usize },

    #[error("model covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line} has {found} fields, expected {expected}")]
    RaggedRows { line: usize, expected: usize, found: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors that mean the chosen method cannot run on this data, as opposed
    /// to malformed input.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::SingularCovariance { .. }
                | Error::NonPositiveDiagonal { .. }
                | Error::ZeroVariance { .. }
                | Error::DegenerateVariance { .. }
                | Error::NegativeQuadraticForm { .. }
                | Error::TooManyDegenerateResamples { .. }
                | Error::AllDrawsNonPd { .. }
                | Error::ClusterTooLarge { .. }
                | Error::SingularSubmatrix { .. }
                | Error::BudgetExceeded { .. }
                | Error::BandUndefined { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
