use std::collections::BTreeMap;

use logq_core::catalog::ColumnDef;
use serde::{Deserialize, Serialize};

/// Cluster summary shown by `logq status` and the HTTP status endpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterStatus {
    pub alive_workers: u32,
    pub total_cores: u32,
    pub used_cores: u32,
    pub workers: Vec<WorkerStatus>,
    pub tables: Vec<TableStatus>,
    pub running_queries: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerStatus {
    pub worker_id: String,
    pub address: String,
    pub cores: u32,
    pub alive: bool,
    pub cached_tables: Vec<String>,
    /// Partitions held per table.
    pub partitions: BTreeMap<String, u32>,
    pub last_heartbeat_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableStatus {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub rows: u64,
    pub bytes: u64,
    pub partitions: u32,
    pub cached: bool,
    pub broadcast: bool,
}
