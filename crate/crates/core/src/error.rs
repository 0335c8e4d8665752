use thiserror::Error;

/// Errors raised by model evaluation, problem assembly and the iteration engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown model identifier `{0}`")]
    UnknownModel(String),

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("constraint matrix is rank deficient (smallest singular value {min_singular_value:e})")]
    RankDeficient { min_singular_value: f64 },

    #[error("dense KKT system is singular")]
    SingularKkt,

    #[error("iteration diverged: non-finite residual at iterate {iteration}")]
    Diverged { iteration: usize },

    #[error("trace has not converged")]
    NotConverged,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
