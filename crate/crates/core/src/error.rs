use thiserror::Error;

/// Errors raised by the pricing engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HedgeError {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Some d of the jump vectors are linearly dependent.
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The origin is not interior to the hull of the jump vectors, so the
    /// minmax value is minus infinity.
    #[error("unbounded below: {0}")]
    UnboundedBelow(String),

    /// A theorem gate (cost or Lipschitz bound) is violated.
    #[error("precondition failed: {msg}")]
    Precondition { msg: String, max_admissible: Option<f64> },

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("resource budget exceeded: {0}")]
    Resource(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Two closed forms that must agree on a boundary do not.
    #[error("inconsistent closed forms: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, HedgeError>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(HedgeError::Argument(msg.into()))
}

impl HedgeError {
    /// Appends location information to the message.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        use HedgeError::*;
        match self {
            Argument(m) => Argument(format!("{m} ({ctx})")),
            Degenerate(m) => Degenerate(format!("{m} ({ctx})")),
            Infeasible(m) => Infeasible(format!("{m} ({ctx})")),
            UnboundedBelow(m) => UnboundedBelow(format!("{m} ({ctx})")),
            Precondition { msg, max_admissible } => Precondition { msg: format!("{msg} ({ctx})"), max_admissible },
            Convergence(m) => Convergence(format!("{m} ({ctx})")),
            Resource(m) => Resource(format!("{m} ({ctx})")),
            Numeric(m) => Numeric(format!("{m} ({ctx})")),
            Consistency(m) => Consistency(format!("{m} ({ctx})")),
        }
    }
}
