//! Worker process: holds assigned partitions, caches them on request, and
//! executes plan fragments.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use logq_core::catalog::{
    parse_csv_range_limited, read_partition, ColumnarPartition, PartitionMeta, StorageMode,
    TableSchema,
};
use logq_core::engine::{execute_fragment, metadata_fragment, HashIndex, PhysicalPlan};
use logq_core::{ErrorCode, QueryError};
use rayon::prelude::*;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use crate::wire::{read_message, write_message, WireMessage};

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub coordinator: String,
    pub worker_id: String,
    pub cores: usize,
    pub data_root: PathBuf,
    pub heartbeat_interval: Duration,
    /// Consecutive failed connection attempts before giving up.
    pub max_retries: u32,
    pub retry_delay: Duration,
}

impl WorkerConfig {
    pub fn new(
        coordinator: impl Into<String>,
        worker_id: impl Into<String>,
        data_root: impl Into<PathBuf>,
    ) -> Self {
        Self {
            coordinator: coordinator.into(),
            worker_id: worker_id.into(),
            cores: 1,
            data_root: data_root.into(),
            heartbeat_interval: Duration::from_secs(2),
            max_retries: 10,
            retry_delay: Duration::from_millis(200),
        }
    }
}

/// Reads that materialized a partition from its source instead of memory.
#[derive(Debug, Default)]
pub struct WorkerStats {
    source_reads: AtomicU64,
    source_rows: AtomicU64,
    fragments: AtomicU64,
}

impl WorkerStats {
    pub fn source_reads(&self) -> u64 {
        self.source_reads.load(Ordering::Relaxed)
    }

    pub fn source_rows(&self) -> u64 {
        self.source_rows.load(Ordering::Relaxed)
    }

    pub fn fragments(&self) -> u64 {
        self.fragments.load(Ordering::Relaxed)
    }

    fn record(&self, rows: usize) {
        self.source_reads.fetch_add(1, Ordering::Relaxed);
        self.source_rows.fetch_add(rows as u64, Ordering::Relaxed);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkerError {
    #[error("coordinator {addr} unreachable after {attempts} attempts: {source}")]
    Unreachable {
        addr: String,
        attempts: u32,
        source: std::io::Error,
    },
    #[error("registration refused: {0}")]
    Refused(String),
    #[error("connection lost after {attempts} reconnect attempts")]
    Lost { attempts: u32 },
}

#[derive(Debug)]
enum Source {
    File(PathBuf),
    Memory(Arc<String>),
}

#[derive(Debug, Clone)]
struct Slot {
    meta: PartitionMeta,
    resident: Option<Arc<ColumnarPartition>>,
}

#[derive(Debug)]
struct WorkerTable {
    schema: Arc<TableSchema>,
    source: Arc<Source>,
    slots: BTreeMap<u32, Slot>,
    cached: bool,
}

impl WorkerTable {
    fn materialize(
        &self,
        slot: &Slot,
        storage: StorageMode,
        max_rows: Option<usize>,
        stats: &WorkerStats,
    ) -> Result<Arc<ColumnarPartition>, QueryError> {
        if storage == StorageMode::Cached {
            if let Some(p) = &slot.resident {
                return Ok(p.clone());
            }
        }
        let part = match &*self.source {
            Source::File(path) => read_partition(
                path,
                &self.schema,
                slot.meta.id,
                slot.meta.range,
                max_rows,
                None,
            )?,
            Source::Memory(content) => {
                let r = slot.meta.range;
                let bytes = content
                    .as_bytes()
                    .get(r.offset as usize..r.end() as usize)
                    .ok_or_else(|| {
                        QueryError::internal(format!("partition {} range out of bounds", r.offset))
                    })?;
                parse_csv_range_limited(bytes, &self.schema, slot.meta.id, r, max_rows)?
            }
        };
        stats.record(part.row_count());
        Ok(Arc::new(part))
    }

    fn rows(&self) -> u64 {
        self.slots.values().map(|s| s.meta.row_count).sum()
    }
}

type Tables = Arc<RwLock<HashMap<String, Arc<WorkerTable>>>>;

struct Session {
    id: String,
    data_root: PathBuf,
    tables: Tables,
    pool: Arc<rayon::ThreadPool>,
    stats: Arc<WorkerStats>,
}

/// A running worker task.
pub struct WorkerHandle {
    stats: Arc<WorkerStats>,
    stop: watch::Sender<bool>,
    task: JoinHandle<Result<(), WorkerError>>,
}

impl WorkerHandle {
    pub fn stats(&self) -> &Arc<WorkerStats> {
        &self.stats
    }

    /// Disconnects and waits for the worker to exit. Cached data is dropped.
    pub async fn stop(self) -> Result<(), WorkerError> {
        let _ = self.stop.send(true);
        self.task.await.unwrap_or(Ok(()))
    }

    pub fn is_finished(&self) -> bool {
        self.task.is_finished()
    }

    pub async fn join(self) -> Result<(), WorkerError> {
        self.task.await.unwrap_or(Ok(()))
    }
}

pub fn spawn_worker(config: WorkerConfig) -> WorkerHandle {
    let stats = Arc::new(WorkerStats::default());
    let (stop, stop_rx) = watch::channel(false);
    let task = tokio::spawn(run(config, stats.clone(), stop_rx));
    WorkerHandle { stats, stop, task }
}

enum SessionEnd {
    Stopped,
    Lost,
}

async fn run(
    config: WorkerConfig,
    stats: Arc<WorkerStats>,
    mut stop: watch::Receiver<bool>,
) -> Result<(), WorkerError> {
    let pool = Arc::new(
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.cores.max(1))
            .thread_name(|i| format!("logq-worker-{i}"))
            .build()
            .expect("failed to build worker thread pool"),
    );
    let mut failures = 0u32;
    loop {
        let stream = match TcpStream::connect(&config.coordinator).await {
            Ok(s) => s,
            Err(e) => {
                failures += 1;
                if failures > config.max_retries {
                    return Err(WorkerError::Unreachable {
                        addr: config.coordinator.clone(),
                        attempts: failures,
                        source: e,
                    });
                }
                let delay = config.retry_delay * 2u32.pow(failures.min(5));
                debug!(worker = %config.worker_id, ?delay, "coordinator unreachable, retrying");
                tokio::select! {
                    _ = tokio::time::sleep(delay.min(Duration::from_secs(5))) => continue,
                    _ = stop.changed() => return Ok(()),
                }
            }
        };
        let _ = stream.set_nodelay(true);
        // every session starts with an empty cache
        let session = Arc::new(Session {
            id: config.worker_id.clone(),
            data_root: config.data_root.clone(),
            tables: Arc::default(),
            pool: pool.clone(),
            stats: stats.clone(),
        });
        match serve(stream, &config, session, &mut stop, &mut failures).await? {
            SessionEnd::Stopped => return Ok(()),
            SessionEnd::Lost => {
                failures += 1;
                if failures > config.max_retries {
                    return Err(WorkerError::Lost { attempts: failures });
                }
                warn!(worker = %config.worker_id, "connection to coordinator lost, reconnecting");
                tokio::time::sleep(config.retry_delay).await;
            }
        }
    }
}

async fn serve(
    stream: TcpStream,
    config: &WorkerConfig,
    session: Arc<Session>,
    stop: &mut watch::Receiver<bool>,
    failures: &mut u32,
) -> Result<SessionEnd, WorkerError> {
    let (mut reader, mut writer) = stream.into_split();
    let register = WireMessage::Register {
        worker_id: config.worker_id.clone(),
        cores: config.cores as u32,
    };
    if write_message(&mut writer, &register).await.is_err() {
        return Ok(SessionEnd::Lost);
    }
    match read_message(&mut reader).await {
        Ok(Some(WireMessage::Registered { .. })) => {}
        Ok(Some(WireMessage::Err { message, .. })) => return Err(WorkerError::Refused(message)),
        Ok(Some(other)) => {
            return Err(WorkerError::Refused(format!(
                "unexpected {} reply",
                other.kind()
            )))
        }
        Ok(None) | Err(_) => return Ok(SessionEnd::Lost),
    }
    *failures = 0;
    info!(worker = %config.worker_id, coordinator = %config.coordinator, "registered");

    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<WireMessage>();
    let writer_task = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            if write_message(&mut writer, &msg).await.is_err() {
                break;
            }
        }
    });
    // loads and caches are applied in arrival order, off the reader loop
    let (admin_tx, mut admin_rx) = mpsc::unbounded_channel::<WireMessage>();
    let admin_session = session.clone();
    let admin_out = out_tx.clone();
    let admin_task = tokio::spawn(async move {
        while let Some(msg) = admin_rx.recv().await {
            let s = admin_session.clone();
            let reply = tokio::task::spawn_blocking(move || apply_admin(&s, msg))
                .await
                .unwrap_or_else(|e| {
                    WireMessage::error(&QueryError::internal(e.to_string()), None, None)
                });
            let _ = admin_out.send(reply);
        }
    });

    // frames are read on their own task: a read cut short by select! would
    // lose stream position
    let (in_tx, mut in_rx) = mpsc::unbounded_channel();
    let reader_task = tokio::spawn(async move {
        loop {
            let msg = read_message(&mut reader).await;
            let end = !matches!(msg, Ok(Some(_)));
            if in_tx.send(msg).is_err() || end {
                break;
            }
        }
    });
    let mut heartbeat = tokio::time::interval(config.heartbeat_interval);
    let end = loop {
        tokio::select! {
            msg = in_rx.recv() => match msg.unwrap_or(Ok(None)) {
                Ok(Some(WireMessage::Shutdown)) => break SessionEnd::Stopped,
                Ok(Some(msg @ (WireMessage::AssignLoad { .. } | WireMessage::Broadcast { .. } | WireMessage::Cache { .. }))) => {
                    let _ = admin_tx.send(msg);
                }
                Ok(Some(WireMessage::Exec { query_id, plan, partitions })) => {
                    let s = session.clone();
                    let out = out_tx.clone();
                    tokio::task::spawn_blocking(move || exec(&s, query_id, &plan, &partitions, &out));
                }
                Ok(Some(WireMessage::Heartbeat)) => {}
                Ok(Some(other)) => warn!(kind = other.kind(), "ignoring unexpected message"),
                Ok(None) => break SessionEnd::Lost,
                Err(e) => {
                    warn!(error = %e, "bad frame from coordinator");
                    break SessionEnd::Lost;
                }
            },
            _ = heartbeat.tick() => {
                let _ = out_tx.send(WireMessage::Heartbeat);
            }
            _ = stop.changed() => break SessionEnd::Stopped,
        }
    };
    admin_task.abort();
    reader_task.abort();
    drop(out_tx);
    writer_task.abort();
    Ok(end)
}

fn load_error(e: impl std::fmt::Display) -> WireMessage {
    WireMessage::Err {
        query_id: None,
        partition_id: None,
        code: ErrorCode::Io,
        message: e.to_string(),
    }
}

fn apply_admin(session: &Session, msg: WireMessage) -> WireMessage {
    match msg {
        WireMessage::AssignLoad {
            table,
            schema,
            source,
            partitions,
        } => {
            let path = session.data_root.join(&source);
            if let Err(e) = check_source(&path, &partitions) {
                return load_error(format!("{table}: {e}"));
            }
            install(session, table, schema, Source::File(path), partitions)
        }
        WireMessage::Broadcast {
            table,
            schema,
            content,
            partitions,
        } => {
            let len = content.len() as u64;
            if let Some(p) = partitions.iter().find(|p| p.range.end() > len) {
                return load_error(format!(
                    "{table}: partition {} lies outside the broadcast content",
                    p.id
                ));
            }
            install(
                session,
                table,
                schema,
                Source::Memory(Arc::new(content)),
                partitions,
            )
        }
        WireMessage::Cache { table } => match cache(session, &table) {
            Ok(reply) => reply,
            Err(e) => load_error(format!("{table}: {e}")),
        },
        other => load_error(format!("{} is not a load message", other.kind())),
    }
}

fn check_source(path: &Path, partitions: &[PartitionMeta]) -> std::io::Result<()> {
    let size = File::open(path)?.metadata()?.len();
    if let Some(p) = partitions.iter().find(|p| p.range.end() > size) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!(
                "{} has {size} bytes, partition {} ends at {}",
                path.display(),
                p.id,
                p.range.end()
            ),
        ));
    }
    Ok(())
}

fn install(
    session: &Session,
    table: String,
    schema: TableSchema,
    source: Source,
    partitions: Vec<PartitionMeta>,
) -> WireMessage {
    let t = WorkerTable {
        schema: Arc::new(schema),
        source: Arc::new(source),
        slots: partitions
            .into_iter()
            .map(|meta| {
                (
                    meta.id,
                    Slot {
                        meta,
                        resident: None,
                    },
                )
            })
            .collect(),
        cached: false,
    };
    let reply = WireMessage::Loaded {
        table: table.clone(),
        partitions: t.slots.len() as u32,
        rows: t.rows(),
        cached: false,
    };
    session.tables.write().unwrap().insert(table, Arc::new(t));
    reply
}

fn cache(session: &Session, name: &str) -> Result<WireMessage, QueryError> {
    let table = session
        .tables
        .read()
        .unwrap()
        .get(name)
        .cloned()
        .ok_or_else(|| {
            QueryError::new(
                ErrorCode::UnknownTable,
                format!("table {name} is not loaded on {}", session.id),
            )
        })?;
    if !table.cached {
        let slots: Vec<Slot> = table.slots.values().cloned().collect();
        let parts = session.pool.install(|| {
            slots
                .par_iter()
                .map(|s| table.materialize(s, StorageMode::DiskStream, None, &session.stats))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let cached = WorkerTable {
            schema: table.schema.clone(),
            source: table.source.clone(),
            slots: slots
                .into_iter()
                .zip(parts)
                .map(|(mut s, p)| {
                    s.meta.row_count = p.row_count() as u64;
                    s.resident = Some(p);
                    (s.meta.id, s)
                })
                .collect(),
            cached: true,
        };
        let mut tables = session.tables.write().unwrap();
        // a reload that raced with caching wins
        if tables.get(name).is_some_and(|t| Arc::ptr_eq(t, &table)) {
            tables.insert(name.to_string(), Arc::new(cached));
        }
    }
    let tables = session.tables.read().unwrap();
    let t = &tables[name];
    Ok(WireMessage::Loaded {
        table: name.to_string(),
        partitions: t.slots.len() as u32,
        rows: t.rows(),
        cached: t.cached,
    })
}

fn build_index(session: &Session, plan: &PhysicalPlan) -> Result<Option<HashIndex>, QueryError> {
    let Some(join) = &plan.join else {
        return Ok(None);
    };
    let table = session
        .tables
        .read()
        .unwrap()
        .get(&join.build_table)
        .cloned()
        .ok_or_else(|| {
            QueryError::new(
                ErrorCode::Protocol,
                format!(
                    "build table {} is not loaded on {}",
                    join.build_table, session.id
                ),
            )
        })?;
    let parts = table
        .slots
        .values()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|s| table.materialize(s, plan.scan.storage, None, &session.stats))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(HashIndex::build(
        parts,
        join.build_key,
        &join.build_filter,
    )))
}

/// Runs one Exec: exactly one Fragment or Err per requested partition.
fn exec(
    session: &Session,
    query_id: u64,
    plan: &PhysicalPlan,
    partitions: &[u32],
    out: &mpsc::UnboundedSender<WireMessage>,
) {
    let fail_all = |e: &QueryError| {
        for &p in partitions {
            let _ = out.send(WireMessage::error(e, Some(query_id), Some(p)));
        }
    };
    let table = session
        .tables
        .read()
        .unwrap()
        .get(&plan.scan.table)
        .cloned();
    let Some(table) = table else {
        fail_all(&QueryError::new(
            ErrorCode::Protocol,
            format!("table {} is not loaded on {}", plan.scan.table, session.id),
        ));
        return;
    };
    session.pool.install(|| {
        let index = match build_index(session, plan) {
            Ok(i) => i,
            Err(e) => return fail_all(&e),
        };
        let budget = plan.scan_row_budget();
        partitions.par_iter().for_each(|&pid| {
            let result = match table.slots.get(&pid) {
                None => Err(QueryError::new(
                    ErrorCode::Protocol,
                    format!(
                        "partition {pid} of {} is not assigned to {}",
                        plan.scan.table, session.id
                    ),
                )),
                Some(slot) if plan.is_metadata_count() => {
                    Ok(metadata_fragment(query_id, pid, slot.meta.row_count))
                }
                Some(slot) => table
                    .materialize(slot, plan.scan.storage, budget, &session.stats)
                    .and_then(|part| execute_fragment(query_id, plan, &part, index.as_ref())),
            };
            let msg = match result {
                Ok(fragment) => {
                    session.stats.fragments.fetch_add(1, Ordering::Relaxed);
                    WireMessage::Fragment { fragment }
                }
                Err(e) => WireMessage::error(&e, Some(query_id), Some(pid)),
            };
            let _ = out.send(msg);
        });
    });
}
