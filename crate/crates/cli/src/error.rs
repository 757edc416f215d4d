use std::fmt::Display;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    /// Invalid configuration or arguments, detected before any compute.
    Config,
    Io,
    /// A numerical or geometric failure inside a pipeline stage.
    Compute,
}

/// Failure of a command, tagged with the module and operation that raised it.
#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{module}::{operation}: {message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub module: &'static str,
    pub operation: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, module: &'static str, operation: &'static str, message: impl Into<String>) -> Self {
        CliError { kind, module, operation, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Compute => 4,
        }
    }

    /// One-line TOML inline table for logs and scripts.
    pub fn record(&self) -> String {
        let table = toml::Value::try_from(self).expect("error record serializes");
        format!("error = {table}")
    }
}

pub trait Context<T> {
    fn ctx(self, kind: ErrorKind, module: &'static str, operation: &'static str) -> Result<T, CliError>;
}

impl<T, E: Display> Context<T> for Result<T, E> {
    fn ctx(self, kind: ErrorKind, module: &'static str, operation: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(kind, module, operation, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_is_a_single_toml_line() {
        let e = CliError::new(ErrorKind::Compute, "refine", "refine_once", "non-finite loss at step 3");
        let rec = e.record();
        assert!(!rec.contains('\n'));
        let parsed: toml::Table = toml::from_str(&rec).unwrap();
        assert_eq!(parsed["error"]["module"].as_str(), Some("refine"));
        assert_eq!(parsed["error"]["kind"].as_str(), Some("compute"));
        assert_eq!(e.exit_code(), 4);
    }
}
