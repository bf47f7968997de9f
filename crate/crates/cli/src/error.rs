use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config error {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] detnet_core::Error),

    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 1 for usage, configuration and file problems, 2 for numerical
    /// failures.
    pub fn exit_code(&self) -> u8 {
        use detnet_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::GradCheck(_) => 2,
            CliError::Core(e) => match e {
                E::NonFinite { .. } | E::TrainingAborted { .. } | E::Singular(_) | E::Detector { .. } => 2,
                _ => 1,
            },
        }
    }

    pub fn report(&self) -> ExitCode {
        eprintln!("error: {self}");
        ExitCode::from(self.exit_code())
    }
}
