use thiserror::Error;

/// Errors raised by model validation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: String,
        found: String,
    },

    #[error("{what} is not {required} (minimum eigenvalue {min_eigenvalue:e})")]
    Definiteness {
        what: String,
        required: &'static str,
        min_eigenvalue: f64,
    },

    #[error("{what} is not symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { what: String, asymmetry: f64 },

    #[error("index out of range: {what}")]
    IndexOutOfRange { what: String },

    #[error("policy violates causality: block ({row}, {col}) above the block diagonal is nonzero")]
    Causality { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("multiplier {lambda:e} does not exceed the largest eigenvalue {lambda_max:e} of the {channel} quadratic")]
    MultiplierBound {
        channel: &'static str,
        lambda: f64,
        lambda_max: f64,
    },

    #[error("mean system is singular (smallest singular value {min_singular_value:e})")]
    SingularMeanSystem { min_singular_value: f64 },

    #[error("reference covariance of the {channel} channel must be positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    DegenerateReference {
        channel: &'static str,
        min_eigenvalue: f64,
    },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    pub(crate) fn dimension(
        what: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Dimension {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
