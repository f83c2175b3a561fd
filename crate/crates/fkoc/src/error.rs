use std::path::PathBuf;

use fkoc_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for bad input, 1 for a failed premise, 3 for numerical trouble.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Csv { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::Syntax(_)
                | CoreError::InvalidParameter(_)
                | CoreError::ShapeMismatch(_)
                | CoreError::GridTooCoarse { .. }
                | CoreError::Radius { .. }
                | CoreError::MismatchedBeta
                | CoreError::Domain(_) => 2,
                CoreError::PremiseViolation { .. }
                | CoreError::NonMonotoneG { .. }
                | CoreError::HypothesisViolation { .. } => 1,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
