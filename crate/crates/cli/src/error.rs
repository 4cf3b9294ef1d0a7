use std::process::ExitCode;

/// Failure of a CLI invocation, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or an invalid configuration file (exit code 1).
    #[error("{0}")]
    Usage(String),
    /// A pipeline stage failed (exit code 2). Artifacts written so far are
    /// left in place.
    #[error("stage {stage} failed: {cause:#}")]
    Stage { stage: &'static str, cause: anyhow::Error },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Stage { .. } => 2,
        })
    }
}

/// Attach a stage name to a stage result.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage { stage, cause: e.into() })
    }
}
