use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants line up with the CLI exit codes: input problems map to 2,
/// classification to 3, construction to 4 and failed verification to 5.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FintError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { offset: usize, name: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("spectral computation failed: {0}")]
    Spectral(String),

    #[error("classification failed: {0}")]
    Classification(String),

    #[error("{theorem}: {message}")]
    Construction { theorem: String, message: String },

    #[error("verification failed: {0}")]
    Verification(String),
}

impl FintError {
    pub fn construction(theorem: impl Into<String>, message: impl Into<String>) -> Self {
        FintError::Construction {
            theorem: theorem.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        FintError::Domain(message.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FintError::Syntax { .. } | FintError::UnknownFunction { .. } | FintError::Input(_) => 2,
            FintError::Classification(_) => 3,
            FintError::Domain(_)
            | FintError::Quadrature(_)
            | FintError::Spectral(_)
            | FintError::Construction { .. } => 4,
            FintError::Integration(_) | FintError::Verification(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, FintError>;
