use thiserror::Error;

/// Errors raised by the lab's solvers, checkers and simulators.
#[derive(Debug, Error)]
pub enum LabError {
    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The grid does not fit the domain it is meant to discretize.
    #[error("grid/domain mismatch: {0}")]
    GridMismatch(String),

    /// The operator is outside the class it was claimed to belong to.
    #[error("operator is not admissible: {0}")]
    NotElliptic(String),

    /// A linear system could not be factored or produced non-finite values.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// The time step does not divide the cylinder height.
    #[error("time step incompatible with domain: {0}")]
    StepIncompatible(String),

    /// Data too degenerate for the requested fit or root.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// An iteration failed to reach its tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A comparison property was violated beyond tolerance.
    #[error("property violated: {0}")]
    Violation(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::InvalidInput(_)
                | LabError::GridMismatch(_)
                | LabError::NotElliptic(_)
                | LabError::StepIncompatible(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidInput(msg.into()))
}
