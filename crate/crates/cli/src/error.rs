use std::fmt;

use cfl_core::prelude::*;
use serde::Serialize;
use std::result::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Hypothesis,
    Numeric,
}

/// A failure tagged with the module it came from. Serialized to stderr as
/// JSON by the binary.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub module: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hypothesis_log: Vec<HypothesisEntry>,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            module: "cli",
            message: message.into(),
            hypothesis_log: Vec::new(),
        }
    }

    pub fn hypothesis(module: &'static str, message: impl Into<String>, log: Vec<HypothesisEntry>) -> Self {
        Self {
            kind: ErrorKind::Hypothesis,
            module,
            message: message.into(),
            hypothesis_log: log,
        }
    }

    pub fn core(module: &'static str, err: Error) -> Self {
        let kind = match err {
            Error::Hypothesis(_) => ErrorKind::Hypothesis,
            ref e if e.is_numeric() => ErrorKind::Numeric,
            _ => ErrorKind::Config,
        };
        Self {
            kind,
            module,
            message: err.to_string(),
            hypothesis_log: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Hypothesis => 3,
            ErrorKind::Numeric => 4,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_else(|_| self.message.clone())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.module, self.message)
    }
}

impl std::error::Error for CliError {}

/// Tags core errors with a module name.
pub(crate) trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> InModule<T> for cfl_core::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::core(module, e))
    }
}
