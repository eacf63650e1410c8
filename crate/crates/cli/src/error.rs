use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("mesh file {0} does not exist")]
    MeshNotFound(PathBuf),

    #[error("{path}:{line}: {message}")]
    MeshParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed trajectory directory: {0}")]
    TrajectoryFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] hkflow::Error),
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MeshNotFound(_) => "MeshNotFound",
            CliError::MeshParse { .. } => "MeshParse",
            CliError::Io { .. } => "Io",
            CliError::TrajectoryFormat(_) => "TrajectoryFormat",
            CliError::Config(_) => "InvalidConfig",
            CliError::Core(e) => e.kind(),
        }
    }

    /// 2 for I/O, 3 for violated preconditions, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MeshNotFound(_) | CliError::MeshParse { .. } | CliError::Io { .. } => 2,
            CliError::TrajectoryFormat(_) => 2,
            CliError::Config(_) => 3,
            CliError::Core(e) if e.is_precondition() => 3,
            CliError::Core(_) => 4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorJson {
            error: self.kind(),
            message: self.to_string(),
        })
        .expect("plain struct")
    }
}
