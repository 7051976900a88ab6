use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dense assembly of size {size} exceeds the budget of {budget}")]
    DenseBudget { size: usize, budget: usize },

    #[error("lifted state of {size} entries exceeds the limit of {budget}")]
    StateBudget { size: usize, budget: usize },

    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("non-finite value produced at step {step} of {total}")]
    Divergence { step: usize, total: usize },

    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("solution has a pole near t = {t}")]
    Pole { t: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn hypothesis(msg: impl Into<String>) -> Self {
        Error::Hypothesis(msg.into())
    }

    /// True for the errors caused by the numerics blowing up rather than by
    /// bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::StepUnderflow { .. } | Error::Pole { .. }
        )
    }
}
