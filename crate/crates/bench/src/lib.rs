//! Synthetic data generation and the query benchmark harness.

mod gen;
mod report;
mod suite;

use std::path::Path;

use logq_core::QueryError;

pub use gen::{generate, GenSpec, GroundTruth, GROUND_TRUTH_FILE};
pub use report::{render_report, ReportFormat};
pub use suite::{
    median, parse_modes, result_digest, run_suite, BenchEntry, BenchMode, BenchReport, Environment,
    SuiteConfig, QUERIES,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("results differ for {query}: {a} and {b} disagree")]
    DigestMismatch { query: String, a: String, b: String },
}

impl BenchError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<logq_core::catalog::CatalogError> for BenchError {
    fn from(e: logq_core::catalog::CatalogError) -> Self {
        BenchError::Query(e.into())
    }
}
