//! Core of the log-query service: table catalog and CSV ingestion, the SQL
//! subset front end, and the partitioned query engine shared by the
//! single-process and cluster execution paths.

pub mod catalog;
pub mod engine;
pub mod error;
pub mod sql;

pub use error::{ErrorCode, QueryError};
