use thiserror::Error;

use crate::psiexpr::ParseError;

pub type Result<T> = std::result::Result<T, LefError>;

#[derive(Debug, Error)]
pub enum LefError {
    #[error("invalid model specification: {0}")]
    InvalidModel(String),

    #[error("warping function violates (H1): {0}")]
    H1Violation(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("domain error in `{node}` at r = {r}: {reason}")]
    Domain { node: String, r: f64, reason: &'static str },

    #[error("step size underflow at r = {r}")]
    StepUnderflow { r: f64 },

    #[error("non-finite state at r = {r}")]
    NonFinite { r: f64 },

    #[error("quadrature did not converge: last estimate {estimate:e} (error {error:e})")]
    Quadrature { estimate: f64, error: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The classification theory does not apply to this model.
    #[error("refused: {0}")]
    Refused(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("undefined quotient: {0}")]
    Undefined(String),
}

impl LefError {
    /// True for errors that mean "the inputs do not satisfy a precondition"
    /// as opposed to a numerical failure.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            LefError::Refused(_)
                | LefError::Precondition(_)
                | LefError::InvalidModel(_)
                | LefError::H1Violation(_)
                | LefError::Parse(_)
        )
    }
}
