use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("bad override `{0}`: expected section.key=value")]
    Override(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn invalid(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Invalid {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl ToString) -> Self {
        CliError::Runtime(message.to_string())
    }

    /// 1 for failures while running, 2 for bad input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            _ => 2,
        }
    }
}
