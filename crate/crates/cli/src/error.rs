use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Issue};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] lfms_core::Error),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("usage: {0}")]
    Usage(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "<[Issue]>::is_empty")]
    issues: &'a [Issue],
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    error: ErrorBody<'a>,
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), reason: e.to_string() }
    }

    /// Process exit code: 2 for bad input, 1 for failed computations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Io { .. } => "io",
            CliError::Config(ConfigError::Parse { .. }) => "parse",
            CliError::Config(ConfigError::Invalid(_)) => "validation",
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
        }
    }

    /// One-line JSON document for stderr.
    pub fn to_json(&self) -> String {
        let (line, issues): (Option<usize>, &[Issue]) = match self {
            CliError::Config(ConfigError::Parse { line, .. }) => (Some(*line), &[]),
            CliError::Config(ConfigError::Invalid(v)) => (None, v),
            _ => (None, &[]),
        };
        let doc = ErrorDoc { error: ErrorBody { kind: self.kind(), message: self.to_string(), line, issues } };
        serde_json::to_string(&doc).expect("error serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let e = CliError::Config(ConfigError::Parse { line: 4, reason: "bad".into() });
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "parse");
        assert_eq!(v["error"]["line"], 4);
        assert_eq!(e.exit_code(), 2);
        let e = CliError::Core(lfms_core::Error::Stiffness { dt: 0.1, limit: 0.01 });
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "stiffness");
        assert_eq!(e.exit_code(), 1);
    }
}
