//! Coordinator and worker processes connected by a framed TCP protocol.
//!
//! The coordinator owns the catalog view, plans queries, and fans Exec
//! messages out to workers holding the scanned partitions. Workers keep
//! loaded and cached tables for the life of their connection.

mod client;
mod coordinator;
mod status;
pub mod wire;
mod worker;

use std::path::Path;
use std::time::Duration;

pub use client::CoordinatorClient;
pub use coordinator::{assign_round_robin, Assignment, Coordinator, CoordinatorConfig};
pub use status::{ClusterStatus, TableStatus, WorkerStatus};
pub use wire::{WireError, WireMessage, PROTOCOL_VERSION};
pub use worker::{spawn_worker, WorkerConfig, WorkerError, WorkerHandle, WorkerStats};

use logq_core::QueryError;

/// Coordinator plus `n` workers in this process, talking over loopback TCP.
pub struct LocalCluster {
    pub coordinator: Coordinator,
    pub workers: Vec<WorkerHandle>,
}

impl LocalCluster {
    /// Starts the coordinator on an ephemeral port and `workers` workers
    /// named `worker-0..`, each with `cores` threads and the coordinator's
    /// data root.
    pub async fn start(
        config: CoordinatorConfig,
        workers: usize,
        cores: usize,
    ) -> Result<Self, QueryError> {
        let data_root = config.data_root.clone();
        let coordinator = Coordinator::start(config)
            .await
            .map_err(|e| QueryError::new(logq_core::ErrorCode::Io, format!("bind failed: {e}")))?;
        let mut cluster = Self {
            coordinator,
            workers: Vec::new(),
        };
        for i in 0..workers {
            cluster.add_worker(&format!("worker-{i}"), cores, &data_root);
            // registration order fixes the assignment order
            cluster
                .coordinator
                .wait_for_workers(i + 1, Duration::from_secs(10))
                .await?;
        }
        Ok(cluster)
    }

    pub fn add_worker(&mut self, id: &str, cores: usize, data_root: &Path) {
        let mut config =
            WorkerConfig::new(self.coordinator.local_addr().to_string(), id, data_root);
        config.cores = cores;
        config.heartbeat_interval = self.coordinator.config().heartbeat_interval;
        self.workers.push(spawn_worker(config));
    }

    /// Loads each `(table, file)` pair, caching them when asked.
    pub async fn load(&self, tables: &[(&str, &str)], cache: bool) -> Result<(), QueryError> {
        for (table, file) in tables {
            self.coordinator.load(table, file).await?;
            if cache {
                self.coordinator.cache(table).await?;
            }
        }
        Ok(())
    }

    /// Total partitions materialized from source files or broadcast text
    /// across all workers.
    pub fn source_reads(&self) -> u64 {
        self.workers.iter().map(|w| w.stats().source_reads()).sum()
    }

    pub async fn shutdown(self) {
        self.coordinator.shutdown();
        for w in self.workers {
            let _ = w.stop().await;
        }
    }
}
