use thiserror::Error;

/// Errors produced by the estimation, reconstruction and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a precondition (dimensions, finiteness, parameter range).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested operation is not defined for this system shape.
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    /// The model fails a rank/trackability requirement.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A numerical routine broke down (singular solve, non-convergence).
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A controller step failed; carries the step index for diagnosis.
    #[error("step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Configuration or file-format problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_step(self, step: usize) -> Error {
        Error::StepFailed {
            step,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping any step context.
    pub fn root(&self) -> &Error {
        match self {
            Error::StepFailed { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
