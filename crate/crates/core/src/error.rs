use thiserror::Error;

use crate::model::Compartment;

/// One field-precise validation message.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in `{field}`{}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    NonFinite { field: String, node: Option<usize> },

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("step size {dt} exceeds stability bound {bound} ({limit})")]
    GuardViolation { dt: f64, bound: f64, limit: String },

    #[error(
        "numerical abort at step {step} (t = {time}): non-finite {compartment} at node {node}; last good step {}",
        step.saturating_sub(1)
    )]
    NumericalAbort {
        step: usize,
        time: f64,
        compartment: Compartment,
        node: usize,
    },

    #[error("validation failed: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Diagnostic>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{}", match .row { Some(r) => format!("row {r}: {message}"), None => message.clone() })]
    Parse { row: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
