use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the function's domain (negative input to γ, non-finite score, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid loss parameters, sampling plans or solver options.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A value failed a structural check (not a permutation, not on the simplex, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// The inner minimizer gave up. `best` carries the best value seen, if any.
    #[error("solver error: {message} (best so far: {best:?})")]
    Solver { message: String, best: Option<f64> },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
