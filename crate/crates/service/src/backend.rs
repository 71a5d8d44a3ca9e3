use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use async_trait::async_trait;
use logq_cluster::{ClusterStatus, Coordinator, CoordinatorClient, TableStatus, WorkerStatus};
use logq_core::catalog::{
    builtin_schemas, load_table, Catalog, ColumnDef, SchemaProvider, StorageMode, TableInfo,
    TableSchema,
};
use logq_core::engine::{EngineOptions, LocalEngine, QueryResult};
use logq_core::sql::{parse, resolve};
use logq_core::{ErrorCode, QueryError};

/// Where validated queries go.
#[async_trait]
pub trait QueryBackend: Send + Sync {
    /// Tables queries are resolved against before dispatch.
    async fn tables(&self) -> Result<BTreeMap<String, TableInfo>, QueryError>;
    async fn execute(&self, sql: &str, mode: StorageMode) -> Result<QueryResult, QueryError>;
    async fn status(&self) -> Result<ClusterStatus, QueryError>;
}

/// In-process engine over a local catalog; no workers involved.
pub struct EmbeddedBackend {
    catalog: Arc<RwLock<Catalog>>,
    engine: Arc<LocalEngine>,
}

impl EmbeddedBackend {
    pub fn new(catalog: Catalog, options: EngineOptions) -> Self {
        Self {
            catalog: Arc::new(RwLock::new(catalog)),
            engine: Arc::new(LocalEngine::new(options)),
        }
    }

    /// Loads whichever of `tFile.csv` and `tMsg.csv` exist under `data_root`.
    pub fn open(
        data_root: &Path,
        partition_bytes: u64,
        cache: bool,
        options: EngineOptions,
    ) -> Result<Self, QueryError> {
        let mut catalog = Catalog::new();
        let (tfile, tmsg) = builtin_schemas();
        for schema in [tfile, tmsg] {
            let path = data_root.join(format!("{}.csv", schema.name));
            if !path.exists() {
                continue;
            }
            let name = schema.name.clone();
            catalog.register(load_table(&path, schema, partition_bytes)?)?;
            if cache {
                catalog.cache_table(&name)?;
            }
        }
        Ok(Self::new(catalog, options))
    }

    pub fn catalog(&self) -> &Arc<RwLock<Catalog>> {
        &self.catalog
    }
}

#[async_trait]
impl QueryBackend for EmbeddedBackend {
    async fn tables(&self) -> Result<BTreeMap<String, TableInfo>, QueryError> {
        let catalog = self.catalog.read().unwrap();
        Ok(catalog
            .tables()
            .map(|t| (t.name().to_string(), t.info()))
            .collect())
    }

    async fn execute(&self, sql: &str, mode: StorageMode) -> Result<QueryResult, QueryError> {
        let (catalog, engine, sql) = (self.catalog.clone(), self.engine.clone(), sql.to_string());
        tokio::task::spawn_blocking(move || {
            let catalog = catalog.read().unwrap();
            let query = resolve(&parse(&sql)?, &*catalog)?;
            engine.execute(&query, &catalog, mode)
        })
        .await
        .map_err(|e| QueryError::internal(e.to_string()))?
    }

    async fn status(&self) -> Result<ClusterStatus, QueryError> {
        let catalog = self.catalog.read().unwrap();
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get()) as u32;
        let cached: Vec<String> = catalog
            .tables()
            .filter(|t| t.is_cached())
            .map(|t| t.name().to_string())
            .collect();
        let tables = catalog
            .tables()
            .map(|t| TableStatus {
                name: t.name().to_string(),
                columns: t.schema().columns.clone(),
                rows: t.total_rows(),
                bytes: t.total_bytes(),
                partitions: t.partitions().len() as u32,
                cached: t.is_cached(),
                broadcast: false,
            })
            .collect();
        Ok(ClusterStatus {
            alive_workers: 1,
            total_cores: cores,
            used_cores: 0,
            workers: vec![WorkerStatus {
                worker_id: "embedded".into(),
                address: "in-process".into(),
                cores,
                alive: true,
                cached_tables: cached,
                partitions: catalog
                    .tables()
                    .map(|t| (t.name().to_string(), t.partitions().len() as u32))
                    .collect(),
                last_heartbeat_ms: 0,
            }],
            tables,
            running_queries: 0,
        })
    }
}

/// Coordinator running in this process.
pub struct ClusterBackend {
    coordinator: Coordinator,
}

impl ClusterBackend {
    pub fn new(coordinator: Coordinator) -> Self {
        Self { coordinator }
    }
}

#[async_trait]
impl QueryBackend for ClusterBackend {
    async fn tables(&self) -> Result<BTreeMap<String, TableInfo>, QueryError> {
        Ok(self.coordinator.table_infos())
    }

    async fn execute(&self, sql: &str, mode: StorageMode) -> Result<QueryResult, QueryError> {
        self.coordinator.submit(sql, mode).await
    }

    async fn status(&self) -> Result<ClusterStatus, QueryError> {
        Ok(self.coordinator.status())
    }
}

/// Coordinator reached over the wire protocol.
pub struct RemoteBackend {
    client: CoordinatorClient,
}

impl RemoteBackend {
    pub fn new(client: CoordinatorClient) -> Self {
        Self { client }
    }
}

#[async_trait]
impl QueryBackend for RemoteBackend {
    async fn tables(&self) -> Result<BTreeMap<String, TableInfo>, QueryError> {
        let status = self.client.status().await?;
        status
            .tables
            .into_iter()
            .map(|t| Ok((t.name.clone(), table_info(t)?)))
            .collect()
    }

    async fn execute(&self, sql: &str, mode: StorageMode) -> Result<QueryResult, QueryError> {
        self.client.submit(sql, mode).await
    }

    async fn status(&self) -> Result<ClusterStatus, QueryError> {
        self.client.status().await
    }
}

/// Enough of a table description to resolve names against.
fn table_info(t: TableStatus) -> Result<TableInfo, QueryError> {
    let columns: Vec<ColumnDef> = t.columns;
    let schema = TableSchema::new(t.name, columns, Vec::new()).map_err(|e| {
        QueryError::new(
            ErrorCode::Protocol,
            format!("coordinator sent a bad schema: {e}"),
        )
    })?;
    Ok(TableInfo {
        schema: Arc::new(schema),
        total_rows: t.rows,
        total_bytes: t.bytes,
        partitions: Vec::new(),
        cached: t.cached,
    })
}

/// Parses and resolves `sql` without running it.
pub(crate) fn validate(sql: &str, tables: &impl SchemaProvider) -> Result<(), QueryError> {
    resolve(&parse(sql)?, tables).map(|_| ())
}
