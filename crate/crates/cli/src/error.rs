use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Bad or missing configuration, detected before any frame is processed.
    #[error("config error: {0}")]
    Config(String),
    /// A processing stage failed.
    #[error("stage `{stage}` failed{}: {msg}", frame_id.as_ref().map(|f| format!(" at frame `{f}`")).unwrap_or_default())]
    Stage {
        stage: String,
        frame_id: Option<String>,
        msg: String,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn stage(stage: &str, frame_id: Option<&str>, msg: impl ToString) -> Self {
        CliError::Stage {
            stage: stage.to_string(),
            frame_id: frame_id.map(str::to_string),
            msg: msg.to_string(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }
}
