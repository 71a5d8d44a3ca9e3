//! HTTP front end: validates SQL, serves the template list, and forwards
//! queries to an embedded engine or a coordinator.

mod backend;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use logq_cluster::ClusterStatus;
use logq_core::catalog::StorageMode;
use logq_core::engine::QueryResult;
use logq_core::{ErrorCode, QueryError};
use serde::{Deserialize, Deserializer, Serialize};

pub use backend::{ClusterBackend, EmbeddedBackend, QueryBackend, RemoteBackend};

/// Sample queries offered by the console, in display order.
pub const TEMPLATES: [&str; 7] = [
    "SELECT * FROM tFile;",
    "SELECT * FROM tMsg;",
    "SELECT Filepath, Phone, Carrier, Timestamp FROM tFile;",
    "SELECT Filepath, Timestamp, MsgType, MsgHash, MsgPath, LineNo FROM tMsg;",
    "SELECT * FROM tFile LIMIT 10;",
    "SELECT * FROM tMsg LIMIT 10;",
    "SELECT Phone, Carrier FROM tFile LIMIT 10;",
];

pub const DEFAULT_MAX_SQL_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub default_mode: StorageMode,
    pub max_sql_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            default_mode: StorageMode::Cached,
            max_sql_bytes: DEFAULT_MAX_SQL_BYTES,
        }
    }
}

impl ServiceConfig {
    /// Defaults, with the execution mode taken from `LOGQ_MODE` when set.
    pub fn from_env() -> Result<Self, String> {
        let mut config = Self::default();
        if let Ok(mode) = std::env::var("LOGQ_MODE") {
            config.default_mode = mode.parse()?;
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct QueryRequest {
    pub sql: String,
    #[serde(default, deserialize_with = "mode_opt")]
    pub mode: Option<StorageMode>,
}

fn mode_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<StorageMode>, D::Error> {
    Option::<String>::deserialize(d)?
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<QueryError>,
}

impl From<QueryResult> for QueryResponse {
    fn from(r: QueryResult) -> Self {
        Self {
            columns: Some(r.columns),
            rows: Some(r.rows),
            row_count: Some(r.row_count),
            elapsed_ms: Some(r.elapsed_ms),
            mode: Some(r.mode),
            error: None,
        }
    }
}

impl From<QueryError> for QueryResponse {
    fn from(e: QueryError) -> Self {
        Self {
            columns: None,
            rows: None,
            row_count: None,
            elapsed_ms: None,
            mode: None,
            error: Some(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateList {
    pub templates: Vec<String>,
}

/// `/status` body: the cluster status plus the names of fully cached tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusDocument {
    #[serde(flatten)]
    pub status: ClusterStatus,
    pub cached_tables: Vec<String>,
}

pub fn http_status(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::NoWorkers | ErrorCode::Timeout => StatusCode::SERVICE_UNAVAILABLE,
        c if c.is_client_error() => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

/// Validation gate in front of a backend.
pub struct QueryService {
    backend: Arc<dyn QueryBackend>,
    config: ServiceConfig,
    dispatched: AtomicU64,
}

impl QueryService {
    pub fn new(backend: Arc<dyn QueryBackend>, config: ServiceConfig) -> Self {
        Self {
            backend,
            config,
            dispatched: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Queries that passed validation and were handed to the backend.
    pub fn dispatch_count(&self) -> u64 {
        self.dispatched.load(Ordering::Relaxed)
    }

    /// Checks length, syntax and names before anything reaches the backend.
    pub async fn validate(&self, sql: &str) -> Result<(), QueryError> {
        if sql.len() > self.config.max_sql_bytes {
            return Err(QueryError::new(
                ErrorCode::QueryTooLong,
                format!(
                    "query is {} bytes, limit is {}",
                    sql.len(),
                    self.config.max_sql_bytes
                ),
            ));
        }
        // Syntax first so a non-query is reported even with nothing loaded.
        logq_core::sql::parse(sql)?;
        let tables = self.backend.tables().await?;
        backend::validate(sql, &tables)
    }

    pub async fn query(&self, req: &QueryRequest) -> Result<QueryResult, QueryError> {
        self.validate(&req.sql).await?;
        self.dispatched.fetch_add(1, Ordering::Relaxed);
        let mode = req.mode.unwrap_or(self.config.default_mode);
        self.backend.execute(&req.sql, mode).await
    }

    pub async fn status(&self) -> Result<StatusDocument, QueryError> {
        let status = self.backend.status().await?;
        let cached_tables = status
            .tables
            .iter()
            .filter(|t| t.cached)
            .map(|t| t.name.clone())
            .collect();
        Ok(StatusDocument {
            status,
            cached_tables,
        })
    }
}

pub fn router(service: Arc<QueryService>) -> Router {
    Router::new()
        .route("/query", post(handle_query))
        .route("/templates", get(handle_templates))
        .route("/status", get(handle_status))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(service)
}

/// Serves `router` until the listener fails.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<QueryService>,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

fn error_response(e: QueryError) -> Response {
    (http_status(e.code), Json(QueryResponse::from(e))).into_response()
}

async fn handle_query(
    State(service): State<Arc<QueryService>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Response {
    let req = match body {
        Ok(Json(req)) => req,
        Err(e) => {
            let err = QueryError::new(
                ErrorCode::Protocol,
                format!("bad request body: {}", e.body_text()),
            );
            return (StatusCode::BAD_REQUEST, Json(QueryResponse::from(err))).into_response();
        }
    };
    match service.query(&req).await {
        Ok(result) => (StatusCode::OK, Json(QueryResponse::from(result))).into_response(),
        Err(e) => {
            tracing::debug!(code = %e.code, "query rejected: {}", e.message);
            error_response(e)
        }
    }
}

async fn handle_templates() -> Json<TemplateList> {
    Json(TemplateList {
        templates: TEMPLATES.iter().map(|t| t.to_string()).collect(),
    })
}

async fn handle_status(State(service): State<Arc<QueryService>>) -> Response {
    match service.status().await {
        Ok(doc) => Json(doc).into_response(),
        Err(e) => error_response(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_parse() {
        for t in TEMPLATES {
            logq_core::sql::parse(t).unwrap();
        }
    }

    #[test]
    fn status_codes() {
        assert_eq!(http_status(ErrorCode::NonQuery), StatusCode::BAD_REQUEST);
        assert_eq!(
            http_status(ErrorCode::QueryTooLong),
            StatusCode::BAD_REQUEST
        );
        assert_eq!(
            http_status(ErrorCode::NoWorkers),
            StatusCode::SERVICE_UNAVAILABLE
        );
        assert_eq!(
            http_status(ErrorCode::Timeout),
            StatusCode::SERVICE_UNAVAILABLE
        );
        assert_eq!(
            http_status(ErrorCode::Incomplete),
            StatusCode::INTERNAL_SERVER_ERROR
        );
    }

    #[test]
    fn request_mode_is_case_insensitive() {
        let r: QueryRequest = serde_json::from_str(r#"{"sql":"x","mode":"DiskStream"}"#).unwrap();
        assert_eq!(r.mode, Some(StorageMode::DiskStream));
        let r: QueryRequest = serde_json::from_str(r#"{"sql":"x","mode":"cached"}"#).unwrap();
        assert_eq!(r.mode, Some(StorageMode::Cached));
        let r: QueryRequest = serde_json::from_str(r#"{"sql":"x"}"#).unwrap();
        assert_eq!(r.mode, None);
        assert!(serde_json::from_str::<QueryRequest>(r#"{"sql":"x","mode":"ram"}"#).is_err());
    }

    #[test]
    fn response_has_rows_or_error() {
        let ok = serde_json::to_value(QueryResponse::from(QueryResult {
            columns: vec!["a".into()],
            rows: vec![],
            row_count: 0,
            elapsed_ms: 1.0,
            mode: "cached-single".into(),
        }))
        .unwrap();
        assert!(ok.get("rows").is_some() && ok.get("error").is_none());
        let err = serde_json::to_value(QueryResponse::from(QueryError::new(
            ErrorCode::NonQuery,
            "no",
        )))
        .unwrap();
        assert!(err.get("rows").is_none());
        assert_eq!(err["error"]["code"], "NON_QUERY");
    }
}
