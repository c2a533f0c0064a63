use thiserror::Error;

use crate::fim::EstimationMode;

pub type Result<T, E = CrbError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrbError {
    #[error("invalid parameter `{name}`: {reason}")]
    Domain { name: &'static str, reason: String },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("|b|^2 = {b_abs2:e} is below the {threshold:e} threshold of the u/v change of variables")]
    SingularParameter { b_abs2: f64, threshold: f64 },

    #[error("non-finite integrand in {context} at node {node}")]
    NonFiniteIntegrand { context: &'static str, node: f64 },

    #[error("Fisher matrix is not positive semidefinite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    NotPositiveSemidefinite { min_eig: f64, max_eig: f64 },

    #[error("{mode} Fisher matrix is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { mode: EstimationMode, condition: f64 },

    #[error("degenerate MCRB denominator {value:e}")]
    DegenerateDenominator { value: f64 },

    #[error("too many rejected Monte-Carlo samples: {rejected} of {total}")]
    TooManyRejections { rejected: usize, total: usize },
}

impl CrbError {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        CrbError::Domain {
            name,
            reason: reason.into(),
        }
    }
}
