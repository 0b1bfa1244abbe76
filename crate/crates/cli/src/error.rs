//! Failures of the command-line driver and their JSON rendering.

use serde_json::{json, Value};
use thiserror::Error;

use crate::expr::ExprError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("--{flag}: {source}")]
    Expression {
        flag: &'static str,
        #[source]
        source: ExprError,
    },
    #[error("line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{message}")]
    Solver {
        message: String,
        report: Option<Value>,
    },
    #[error("{} of {total} rows failed", .rows.len())]
    Rows {
        total: usize,
        /// `(spec line, message)` of every failed row.
        rows: Vec<(usize, String)>,
    },
    #[error("failed properties: {}", .0.join(", "))]
    Check(Vec<String>),
}

impl CliError {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_string(),
            source,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage_error",
            CliError::InvalidArgument(_) => "invalid_argument",
            CliError::Expression { .. } => "expression_error",
            CliError::Spec { .. } => "spec_error",
            CliError::Io { .. } => "io_error",
            CliError::Solver { .. } => "solver_error",
            CliError::Rows { .. } => "rows_failed",
            CliError::Check(_) => "check_failed",
        }
    }

    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_)
            | CliError::InvalidArgument(_)
            | CliError::Expression { .. }
            | CliError::Spec { .. } => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut body = json!({ "code": self.code(), "message": self.to_string() });
        let extra = match self {
            CliError::Expression { flag, source } => {
                let mut e = json!({ "flag": flag });
                if let Some(pos) = expr_position(source) {
                    e["position"] = json!(pos);
                }
                e
            }
            CliError::Spec { line, .. } => json!({ "line": line }),
            CliError::Io { path, .. } => json!({ "path": path }),
            CliError::Solver {
                report: Some(r), ..
            } => json!({ "report": r }),
            CliError::Rows { total, rows } => json!({
                "total": total,
                "failed": rows
                    .iter()
                    .map(|(line, msg)| json!({ "line": line, "message": msg }))
                    .collect::<Vec<_>>(),
            }),
            CliError::Check(names) => json!({ "failed": names }),
            _ => json!({}),
        };
        if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
            b.extend(e);
        }
        json!({ "error": body })
    }
}

fn expr_position(e: &ExprError) -> Option<usize> {
    match e {
        ExprError::BadChar { pos, .. }
        | ExprError::UnknownIdent { pos, .. }
        | ExprError::BadNumber { pos, .. }
        | ExprError::Expected { pos, .. } => Some(*pos),
        ExprError::Empty => None,
    }
}
