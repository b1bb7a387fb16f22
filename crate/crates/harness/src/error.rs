use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Divergence(String),

    #[error("{0}")]
    Io(String),

    #[error("{0}")]
    Run(String),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Divergence(_) => 2,
            HarnessError::Io(_) => 3,
            HarnessError::Run(_) => 1,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        HarnessError::Io(format!("{context}: {err}"))
    }
}

impl From<spikeforce::Error> for HarnessError {
    fn from(e: spikeforce::Error) -> Self {
        use spikeforce::Error as E;
        match e {
            E::Config(_) => HarnessError::Config(e.to_string()),
            E::Divergence { .. } => HarnessError::Divergence(e.to_string()),
            E::Io(_) | E::Integrity(_) => HarnessError::Io(e.to_string()),
            E::NumericInput(_) | E::DimensionMismatch { .. } => HarnessError::Run(e.to_string()),
        }
    }
}
