use std::fmt;

use thiserror::Error;

/// One broken invariant found while assembling a metamodel. `subject` is the
/// offending id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrityViolation {
    pub subject: String,
    pub reason: String,
}

impl IntegrityViolation {
    pub fn new(subject: impl Into<String>, reason: impl Into<String>) -> Self {
        IntegrityViolation {
            subject: subject.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for IntegrityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.reason)
    }
}

pub(crate) fn join_violations(violations: &[IntegrityViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {what}: `{value}`")]
pub struct ParseValueError {
    pub what: &'static str,
    pub value: String,
}

impl ParseValueError {
    pub fn new(what: &'static str, value: &str) -> Self {
        ParseValueError {
            what,
            value: value.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown fragment `{0}`")]
pub struct UnknownFragment(pub String);

/// Failure to load a structured-text document (catalog, action script,
/// store table).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("integrity error: {}", join_violations(.0))]
    Integrity(Vec<IntegrityViolation>),
}

impl CatalogError {
    pub fn code(&self) -> &'static str {
        match self {
            CatalogError::Parse(_) => "PARSE_ERROR",
            CatalogError::Integrity(_) => "INTEGRITY_ERROR",
        }
    }
}
