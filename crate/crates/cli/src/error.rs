use std::path::PathBuf;

use privpolar::error::Category;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] privpolar::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Parse { .. } | CliError::Usage(_) | CliError::Read { .. } => "config",
            CliError::Write { .. } => "internal",
            CliError::Core(e) => match e.category() {
                Category::Config => "config",
                Category::Limit => "limit",
                Category::Internal => "internal",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "limit" => 3,
            _ => 4,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.category(), "message": self.to_string() }).to_string()
    }
}
