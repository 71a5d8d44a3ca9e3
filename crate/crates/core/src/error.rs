use std::fmt;

use serde::{Deserialize, Serialize};

/// Machine-readable error code carried by every query-facing error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Syntax,
    NonQuery,
    UnknownTable,
    UnknownColumn,
    AmbiguousColumn,
    Unsupported,
    QueryTooLong,
    ResultTooLarge,
    NoWorkers,
    Timeout,
    Incomplete,
    Protocol,
    Io,
    Internal,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Syntax => "SYNTAX",
            ErrorCode::NonQuery => "NON_QUERY",
            ErrorCode::UnknownTable => "UNKNOWN_TABLE",
            ErrorCode::UnknownColumn => "UNKNOWN_COLUMN",
            ErrorCode::AmbiguousColumn => "AMBIGUOUS_COLUMN",
            ErrorCode::Unsupported => "UNSUPPORTED",
            ErrorCode::QueryTooLong => "QUERY_TOO_LONG",
            ErrorCode::ResultTooLarge => "RESULT_TOO_LARGE",
            ErrorCode::NoWorkers => "NO_WORKERS",
            ErrorCode::Timeout => "TIMEOUT",
            ErrorCode::Incomplete => "INCOMPLETE",
            ErrorCode::Protocol => "PROTOCOL",
            ErrorCode::Io => "IO",
            ErrorCode::Internal => "INTERNAL",
        }
    }

    /// Errors caused by the submitted text itself rather than by the
    /// execution environment.
    pub fn is_client_error(self) -> bool {
        matches!(
            self,
            ErrorCode::Syntax
                | ErrorCode::NonQuery
                | ErrorCode::UnknownTable
                | ErrorCode::UnknownColumn
                | ErrorCode::AmbiguousColumn
                | ErrorCode::Unsupported
                | ErrorCode::QueryTooLong
                | ErrorCode::ResultTooLarge
        )
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error returned by parsing, resolution, planning and execution.
///
/// `position` is a byte offset into the submitted SQL text when the error
/// can be attributed to a token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct QueryError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

impl QueryError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            position: None,
        }
    }

    pub fn at(code: ErrorCode, message: impl Into<String>, position: usize) -> Self {
        Self {
            code,
            message: message.into(),
            position: Some(position),
        }
    }

    pub fn syntax(message: impl Into<String>, position: usize) -> Self {
        Self::at(ErrorCode::Syntax, message, position)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }
}

impl From<crate::catalog::CatalogError> for QueryError {
    fn from(err: crate::catalog::CatalogError) -> Self {
        QueryError::new(ErrorCode::Io, err.to_string())
    }
}
