use thiserror::Error;

/// Failures mapped to process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("estimate not valid: {0}")]
    Validity(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        Self::Config(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Verification(_) => 1,
            Self::Config(_) | Self::Io(_) => 2,
            Self::Validity(_) => 3,
        }
    }
}

impl From<dynbv_core::Error> for CliError {
    fn from(e: dynbv_core::Error) -> Self {
        use dynbv_core::Error as E;
        match e {
            E::AllTrialsAborted(_) | E::NoAcceptances(_) | E::BracketFailure { .. } | E::DegenerateRatio(_) => {
                Self::Validity(e.to_string())
            }
            _ => Self::Config(e.to_string()),
        }
    }
}
