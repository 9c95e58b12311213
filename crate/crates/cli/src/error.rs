use std::process::ExitCode;

/// Exit code 2 for anything wrong with the request, 1 for failures while running it.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: tsi_core::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) | CliError::Validation(_) => ExitCode::from(2),
            CliError::Stage { .. } | CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

/// Attaches a stage name to core failures.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
    /// Core failures that stem from the request itself rather than the computation.
    fn invalid(self) -> Result<T, CliError>;
}

impl<T> StageExt<T> for tsi_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage { stage, source })
    }

    fn invalid(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Validation(e.to_string()))
    }
}

pub fn io_error(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
