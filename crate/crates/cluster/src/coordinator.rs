//! Coordinator: worker registry, table distribution, query dispatch and
//! fragment collection.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use logq_core::catalog::{
    builtin_schemas, load_table, read_range, ByteRange, PartitionMeta, SchemaProvider, StorageMode,
    TableHandle, TableInfo, TableSchema, DEFAULT_PARTITION_BYTES,
};
use logq_core::engine::{merge, plan, FragmentResult, PhysicalPlan, PlanOptions, QueryResult};
use logq_core::sql::{parse, resolve};
use logq_core::{ErrorCode, QueryError};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tracing::{debug, info, warn};

use crate::status::{ClusterStatus, TableStatus, WorkerStatus};
use crate::wire::{read_message, write_message, WireMessage};

#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    pub listen: String,
    /// Directory that `LoadTable` file names are resolved against. Workers
    /// resolve the same names against their own data root.
    pub data_root: PathBuf,
    pub heartbeat_interval: Duration,
    pub query_timeout: Duration,
    pub load_timeout: Duration,
    pub plan: PlanOptions,
    pub partition_bytes: u64,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:0".into(),
            data_root: PathBuf::from("."),
            heartbeat_interval: Duration::from_secs(2),
            query_timeout: Duration::from_secs(60),
            load_timeout: Duration::from_secs(600),
            plan: PlanOptions::default(),
            partition_bytes: DEFAULT_PARTITION_BYTES,
        }
    }
}

/// Result of distributing one table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub table: String,
    pub broadcast: bool,
    /// Partitions each worker scans, keyed by worker id.
    pub scans: BTreeMap<String, Vec<u32>>,
}

/// Round-robin in partition-id order: partition `p` goes to worker
/// `p % workers`.
pub fn assign_round_robin(partitions: &[u32], workers: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); workers];
    if workers == 0 {
        return out;
    }
    let mut sorted = partitions.to_vec();
    sorted.sort_unstable();
    for (i, p) in sorted.into_iter().enumerate() {
        out[i % workers].push(p);
    }
    out
}

type LoadAck = oneshot::Sender<Result<(u32, u64, bool), QueryError>>;

struct WorkerEntry {
    address: String,
    cores: u32,
    alive: bool,
    seq: u64,
    conn: u64,
    last_heartbeat: Instant,
    tx: mpsc::UnboundedSender<WireMessage>,
    cached_tables: BTreeSet<String>,
    partitions: BTreeMap<String, u32>,
    outstanding: u64,
    pending_loads: VecDeque<LoadAck>,
}

struct TableEntry {
    info: TableInfo,
    broadcast: bool,
    /// Scan owner per partition, indexed by partition id.
    owners: Vec<String>,
    holders: Vec<String>,
}

struct Inflight {
    pending: BTreeSet<u32>,
    owners: HashMap<u32, String>,
    fragments: Vec<FragmentResult>,
    done: oneshot::Sender<Result<Vec<FragmentResult>, QueryError>>,
}

#[derive(Default)]
struct State {
    workers: BTreeMap<String, WorkerEntry>,
    tables: BTreeMap<String, TableEntry>,
    inflight: HashMap<u64, Inflight>,
    next_seq: u64,
}

impl SchemaProvider for State {
    fn table_info(&self, name: &str) -> Option<TableInfo> {
        self.tables.get(name).map(|t| t.info.clone())
    }
}

impl State {
    fn alive(&self) -> Vec<&String> {
        let mut ids: Vec<(&u64, &String)> = self
            .workers
            .iter()
            .filter(|(_, w)| w.alive)
            .map(|(id, w)| (&w.seq, id))
            .collect();
        ids.sort();
        ids.into_iter().map(|(_, id)| id).collect()
    }

    fn fail_query(&mut self, query_id: u64, error: QueryError) {
        if let Some(q) = self.inflight.remove(&query_id) {
            self.release(&q);
            let _ = q.done.send(Err(error));
        }
    }

    fn release(&mut self, q: &Inflight) {
        for p in &q.pending {
            if let Some(w) = q.owners.get(p).and_then(|id| self.workers.get_mut(id)) {
                w.outstanding = w.outstanding.saturating_sub(1);
            }
        }
    }

    fn mark_dead(&mut self, id: &str, reason: &str) {
        let Some(w) = self.workers.get_mut(id) else {
            return;
        };
        if !w.alive {
            return;
        }
        w.alive = false;
        w.outstanding = 0;
        for ack in w.pending_loads.drain(..) {
            let _ = ack.send(Err(QueryError::new(
                ErrorCode::Incomplete,
                format!("worker {id} {reason}"),
            )));
        }
        let affected: Vec<u64> = self
            .inflight
            .iter()
            .filter(|(_, q)| {
                q.pending
                    .iter()
                    .any(|p| q.owners.get(p).map(String::as_str) == Some(id))
            })
            .map(|(qid, _)| *qid)
            .collect();
        for qid in affected {
            let unfinished = self.inflight[&qid]
                .pending
                .iter()
                .copied()
                .collect::<Vec<_>>();
            self.fail_query(
                qid,
                QueryError::new(
                    ErrorCode::Incomplete,
                    format!("worker {id} {reason}; unfinished partitions {unfinished:?}"),
                ),
            );
        }
        warn!(worker = id, reason, "worker marked dead");
    }
}

struct Shared {
    config: CoordinatorConfig,
    state: Mutex<State>,
    next_query: AtomicU64,
    next_conn: AtomicU64,
    dispatches: AtomicU64,
    admin: tokio::sync::Mutex<()>,
}

/// A running coordinator. Cheap to clone; all clones drive the same
/// process.
#[derive(Clone)]
pub struct Coordinator {
    shared: Arc<Shared>,
    addr: SocketAddr,
    stop: Arc<watch::Sender<bool>>,
}

impl Coordinator {
    /// Binds the listen address and starts accepting workers and clients.
    pub async fn start(config: CoordinatorConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind(&config.listen).await?;
        let addr = listener.local_addr()?;
        let (stop, stop_rx) = watch::channel(false);
        let shared = Arc::new(Shared {
            config,
            state: Mutex::default(),
            next_query: AtomicU64::new(1),
            next_conn: AtomicU64::new(1),
            dispatches: AtomicU64::new(0),
            admin: tokio::sync::Mutex::new(()),
        });
        let coordinator = Self {
            shared,
            addr,
            stop: Arc::new(stop),
        };
        tokio::spawn(coordinator.clone().accept_loop(listener, stop_rx.clone()));
        tokio::spawn(coordinator.clone().liveness_loop(stop_rx));
        info!(%addr, "coordinator listening");
        Ok(coordinator)
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.shared.config
    }

    /// Exec messages sent to workers since start.
    pub fn dispatch_count(&self) -> u64 {
        self.shared.dispatches.load(Ordering::Relaxed)
    }

    /// Tells workers to exit and stops accepting connections.
    pub fn shutdown(&self) {
        let state = self.shared.state.lock().unwrap();
        for w in state.workers.values().filter(|w| w.alive) {
            let _ = w.tx.send(WireMessage::Shutdown);
        }
        let _ = self.stop.send(true);
    }

    pub fn table_infos(&self) -> BTreeMap<String, TableInfo> {
        let state = self.shared.state.lock().unwrap();
        state
            .tables
            .iter()
            .map(|(k, t)| (k.clone(), t.info.clone()))
            .collect()
    }

    /// Waits until at least `n` workers are alive.
    pub async fn wait_for_workers(&self, n: usize, timeout: Duration) -> Result<(), QueryError> {
        let deadline = Instant::now() + timeout;
        loop {
            let alive = self.shared.state.lock().unwrap().alive().len();
            if alive >= n {
                return Ok(());
            }
            if Instant::now() >= deadline {
                return Err(QueryError::new(
                    ErrorCode::NoWorkers,
                    format!("{alive} of {n} workers registered within {timeout:?}"),
                ));
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    pub fn status(&self) -> ClusterStatus {
        let state = self.shared.state.lock().unwrap();
        let now = Instant::now();
        let mut workers: Vec<(&u64, WorkerStatus)> = state
            .workers
            .iter()
            .map(|(id, w)| {
                (
                    &w.seq,
                    WorkerStatus {
                        worker_id: id.clone(),
                        address: w.address.clone(),
                        cores: w.cores,
                        alive: w.alive,
                        cached_tables: w.cached_tables.iter().cloned().collect(),
                        partitions: w.partitions.clone(),
                        last_heartbeat_ms: now.duration_since(w.last_heartbeat).as_millis() as u64,
                    },
                )
            })
            .collect();
        workers.sort_by_key(|(seq, _)| **seq);
        let live = state.workers.values().filter(|w| w.alive);
        ClusterStatus {
            alive_workers: live.clone().count() as u32,
            total_cores: live.clone().map(|w| w.cores).sum(),
            used_cores: live.map(|w| w.outstanding.min(w.cores as u64) as u32).sum(),
            workers: workers.into_iter().map(|(_, w)| w).collect(),
            tables: state
                .tables
                .values()
                .map(|t| TableStatus {
                    name: t.info.name().to_string(),
                    columns: t.info.schema.columns.clone(),
                    rows: t.info.total_rows,
                    bytes: t.info.total_bytes,
                    partitions: t.info.partitions.len() as u32,
                    cached: t.info.cached,
                    broadcast: t.broadcast,
                })
                .collect(),
            running_queries: state.inflight.len() as u32,
        }
    }

    /// Loads `file` (relative to the data root) as table `name`, which must
    /// be one of the built-in schemas, and distributes it.
    pub async fn load(&self, name: &str, file: &str) -> Result<Assignment, QueryError> {
        let (tfile, tmsg) = builtin_schemas();
        let schema = [tfile, tmsg]
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| {
                QueryError::new(
                    ErrorCode::UnknownTable,
                    format!("no built-in schema named {name}"),
                )
            })?;
        self.load_with_schema(schema, file).await
    }

    pub async fn load_with_schema(
        &self,
        schema: TableSchema,
        file: &str,
    ) -> Result<Assignment, QueryError> {
        let path = self.shared.config.data_root.join(file);
        let target = self.shared.config.partition_bytes;
        let handle = tokio::task::spawn_blocking(move || load_table(path, schema, target))
            .await
            .map_err(|e| QueryError::internal(e.to_string()))??;
        self.distribute(&handle, file).await
    }

    /// Ships `table` to the alive workers: small tables whole to every
    /// worker, others as round-robin partition ranges. `source` is the
    /// file name workers resolve against their data root.
    pub async fn distribute(
        &self,
        table: &TableHandle,
        source: &str,
    ) -> Result<Assignment, QueryError> {
        let _admin = self.shared.admin.lock().await;
        let info = table.info();
        let name = info.name().to_string();
        let broadcast = info.total_bytes <= self.shared.config.plan.broadcast_threshold;
        let content = if broadcast {
            Some(broadcast_content(table)?)
        } else {
            None
        };
        let ids: Vec<u32> = info.partitions.iter().map(|p| p.id).collect();

        let (acks, assignment, owners, holders) = {
            let mut state = self.shared.state.lock().unwrap();
            let workers: Vec<String> = state.alive().into_iter().cloned().collect();
            if workers.is_empty() {
                return Err(QueryError::new(
                    ErrorCode::NoWorkers,
                    "no alive workers to distribute to",
                ));
            }
            let scans = assign_round_robin(&ids, workers.len());
            let mut owners = vec![String::new(); ids.len()];
            for (w, parts) in workers.iter().zip(&scans) {
                for &p in parts {
                    owners[p as usize] = w.clone();
                }
            }
            // drop the old copy from the catalog until the new one is in place
            state.tables.remove(&name);
            let mut acks = Vec::new();
            for (w, parts) in workers.iter().zip(&scans) {
                let msg = match &content {
                    Some((content, metas)) => WireMessage::Broadcast {
                        table: name.clone(),
                        schema: (*info.schema).clone(),
                        content: content.clone(),
                        partitions: metas.clone(),
                    },
                    None => WireMessage::AssignLoad {
                        table: name.clone(),
                        schema: (*info.schema).clone(),
                        source: source.to_string(),
                        partitions: parts
                            .iter()
                            .map(|&p| info.partitions[p as usize].clone())
                            .collect(),
                    },
                };
                let entry = state.workers.get_mut(w).expect("alive worker");
                entry.cached_tables.remove(&name);
                entry.partitions.remove(&name);
                let (tx, rx) = oneshot::channel();
                entry.pending_loads.push_back(tx);
                let _ = entry.tx.send(msg);
                acks.push((w.clone(), rx));
            }
            let assignment = Assignment {
                table: name.clone(),
                broadcast,
                scans: workers.iter().cloned().zip(scans).collect(),
            };
            (acks, assignment, owners, workers)
        };

        let loaded = self.await_acks(acks, &name).await?;
        let mut state = self.shared.state.lock().unwrap();
        for (w, (partitions, _, _)) in loaded {
            if let Some(entry) = state.workers.get_mut(&w) {
                entry.partitions.insert(name.clone(), partitions);
            }
        }
        let mut info = info;
        info.cached = false;
        state.tables.insert(
            name,
            TableEntry {
                info,
                broadcast,
                owners,
                holders,
            },
        );
        Ok(assignment)
    }

    /// Makes `table` resident on every worker holding part of it.
    pub async fn cache(&self, table: &str) -> Result<(), QueryError> {
        let _admin = self.shared.admin.lock().await;
        let acks = {
            let mut state = self.shared.state.lock().unwrap();
            let entry = state.tables.get(table).ok_or_else(|| {
                QueryError::new(
                    ErrorCode::UnknownTable,
                    format!("table {table} is not loaded"),
                )
            })?;
            let holders = entry.holders.clone();
            let mut acks = Vec::new();
            for w in holders {
                let worker = state
                    .workers
                    .get_mut(&w)
                    .filter(|w| w.alive)
                    .ok_or_else(|| {
                        QueryError::new(
                            ErrorCode::Incomplete,
                            format!("worker {w} holding {table} is not alive"),
                        )
                    })?;
                let (tx, rx) = oneshot::channel();
                worker.pending_loads.push_back(tx);
                let _ = worker.tx.send(WireMessage::Cache {
                    table: table.to_string(),
                });
                acks.push((w, rx));
            }
            acks
        };
        let loaded = self.await_acks(acks, table).await?;
        let mut state = self.shared.state.lock().unwrap();
        for (w, _) in &loaded {
            if let Some(entry) = state.workers.get_mut(w) {
                entry.cached_tables.insert(table.to_string());
            }
        }
        if let Some(t) = state.tables.get_mut(table) {
            t.info.cached = loaded.iter().all(|(_, (_, _, cached))| *cached);
        }
        Ok(())
    }

    async fn await_acks(
        &self,
        acks: Vec<(
            String,
            oneshot::Receiver<Result<(u32, u64, bool), QueryError>>,
        )>,
        table: &str,
    ) -> Result<Vec<(String, (u32, u64, bool))>, QueryError> {
        let timeout = self.shared.config.load_timeout;
        let mut out = Vec::new();
        for (w, rx) in acks {
            let ack = match tokio::time::timeout(timeout, rx).await {
                Ok(Ok(r)) => r,
                Ok(Err(_)) => Err(QueryError::new(
                    ErrorCode::Incomplete,
                    format!("worker {w} disconnected"),
                )),
                Err(_) => Err(QueryError::new(
                    ErrorCode::Timeout,
                    format!("worker {w} did not answer within {timeout:?}"),
                )),
            };
            match ack {
                Ok(a) => out.push((w, a)),
                Err(e) => {
                    return Err(QueryError::new(
                        e.code,
                        format!("partial load of {table} aborted: worker {w}: {}", e.message),
                    ))
                }
            }
        }
        Ok(out)
    }

    /// Parses, plans and runs `sql` across the workers.
    pub async fn submit(&self, sql: &str, mode: StorageMode) -> Result<QueryResult, QueryError> {
        let started = Instant::now();
        let query = parse(sql)?;
        let query_id = self.shared.next_query.fetch_add(1, Ordering::Relaxed);
        let (plan, expected, rx) = {
            let mut state = self.shared.state.lock().unwrap();
            if state.alive().is_empty() {
                return Err(QueryError::new(ErrorCode::NoWorkers, "no alive workers"));
            }
            let resolved = resolve(&query, &*state)?;
            let plan = plan(&resolved, mode, &self.shared.config.plan)?;
            self.dispatch(&mut state, query_id, plan)?
        };
        let fragments = match tokio::time::timeout(self.shared.config.query_timeout, rx).await {
            Ok(Ok(r)) => r?,
            Ok(Err(_)) => return Err(QueryError::internal("query dropped")),
            Err(_) => {
                let mut state = self.shared.state.lock().unwrap();
                let unfinished: Vec<u32> = state
                    .inflight
                    .get(&query_id)
                    .map(|q| q.pending.iter().copied().collect())
                    .unwrap_or_default();
                let e = QueryError::new(
                    ErrorCode::Timeout,
                    format!(
                        "query timed out after {:?}; unfinished partitions {unfinished:?}",
                        self.shared.config.query_timeout
                    ),
                );
                state.fail_query(query_id, e.clone());
                return Err(e);
            }
        };
        let mut result = merge(query_id, fragments, &plan, &expected)?;
        result.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        result.mode = format!("{}-cluster", mode.label());
        Ok(result)
    }

    #[allow(clippy::type_complexity)]
    fn dispatch(
        &self,
        state: &mut State,
        query_id: u64,
        plan: PhysicalPlan,
    ) -> Result<
        (
            PhysicalPlan,
            Vec<u32>,
            oneshot::Receiver<Result<Vec<FragmentResult>, QueryError>>,
        ),
        QueryError,
    > {
        if state.alive().is_empty() {
            return Err(QueryError::new(ErrorCode::NoWorkers, "no alive workers"));
        }
        let table = &state.tables[&plan.scan.table];
        if let Some(join) = &plan.join {
            let build = &state.tables[&join.build_table];
            if !build.broadcast {
                return Err(QueryError::new(
                    ErrorCode::Unsupported,
                    format!(
                        "build table {} was not broadcast to the workers",
                        join.build_table
                    ),
                ));
            }
            if let Some(dead) = build
                .holders
                .iter()
                .find(|w| !state.workers.get(*w).is_some_and(|w| w.alive))
            {
                return Err(QueryError::new(
                    ErrorCode::Incomplete,
                    format!(
                        "worker {dead} holding {} is not alive; reload the table",
                        join.build_table
                    ),
                ));
            }
        }
        let mut by_worker: BTreeMap<&String, Vec<u32>> = BTreeMap::new();
        for (p, owner) in table.owners.iter().enumerate() {
            by_worker.entry(owner).or_default().push(p as u32);
        }
        for (w, parts) in &by_worker {
            if !state.workers.get(*w).is_some_and(|w| w.alive) {
                return Err(QueryError::new(
                    ErrorCode::Incomplete,
                    format!("worker {w} holding partitions {parts:?} of {} is not alive; reload the table", plan.scan.table),
                ));
            }
        }
        let expected: Vec<u32> = (0..table.owners.len() as u32).collect();
        let owners: HashMap<u32, String> = table
            .owners
            .iter()
            .enumerate()
            .map(|(p, w)| (p as u32, w.clone()))
            .collect();
        let by_worker: Vec<(String, Vec<u32>)> =
            by_worker.into_iter().map(|(w, p)| (w.clone(), p)).collect();
        let (done, rx) = oneshot::channel();
        if expected.is_empty() {
            let _ = done.send(Ok(Vec::new()));
            return Ok((plan, expected, rx));
        }
        state.inflight.insert(
            query_id,
            Inflight {
                pending: expected.iter().copied().collect(),
                owners,
                fragments: Vec::with_capacity(expected.len()),
                done,
            },
        );
        for (w, partitions) in by_worker {
            let entry = state.workers.get_mut(&w).expect("checked alive");
            entry.outstanding += partitions.len() as u64;
            self.shared.dispatches.fetch_add(1, Ordering::Relaxed);
            let _ = entry.tx.send(WireMessage::Exec {
                query_id,
                plan: plan.clone(),
                partitions,
            });
        }
        Ok((plan, expected, rx))
    }

    async fn accept_loop(self, listener: TcpListener, mut stop: watch::Receiver<bool>) {
        loop {
            tokio::select! {
                accepted = listener.accept() => match accepted {
                    Ok((stream, peer)) => {
                        let _ = stream.set_nodelay(true);
                        tokio::spawn(self.clone().connection(stream, peer));
                    }
                    Err(e) => warn!(error = %e, "accept failed"),
                },
                _ = stop.changed() => return,
            }
        }
    }

    async fn liveness_loop(self, mut stop: watch::Receiver<bool>) {
        let interval = self.shared.config.heartbeat_interval;
        let mut tick = tokio::time::interval(interval / 2);
        loop {
            tokio::select! {
                _ = tick.tick() => {}
                _ = stop.changed() => return,
            }
            let mut state = self.shared.state.lock().unwrap();
            let now = Instant::now();
            let silent: Vec<String> = state
                .workers
                .iter()
                .filter(|(_, w)| w.alive && now.duration_since(w.last_heartbeat) > interval * 3)
                .map(|(id, _)| id.clone())
                .collect();
            for id in silent {
                state.mark_dead(&id, "missed 3 heartbeats");
            }
        }
    }

    async fn connection(self, stream: TcpStream, peer: SocketAddr) {
        let (mut reader, mut writer) = stream.into_split();
        let first = match read_message(&mut reader).await {
            Ok(Some(m)) => m,
            Ok(None) => return,
            Err(e) => {
                debug!(%peer, error = %e, "bad first frame");
                return;
            }
        };
        if let WireMessage::Register { worker_id, cores } = first {
            self.worker_session(reader, writer, peer, worker_id, cores)
                .await;
            return;
        }
        // client connection: one reply per request, in order
        let mut next = Some(first);
        while let Some(request) = next {
            let reply = self.client_request(request).await;
            if write_message(&mut writer, &reply).await.is_err() {
                return;
            }
            next = match read_message(&mut reader).await {
                Ok(m) => m,
                Err(_) => None,
            };
        }
    }

    async fn client_request(&self, request: WireMessage) -> WireMessage {
        match request {
            WireMessage::Submit { sql, mode } => match self.submit(&sql, mode).await {
                Ok(result) => WireMessage::Result { result },
                Err(e) => WireMessage::error(&e, None, None),
            },
            WireMessage::StatusRequest => WireMessage::Status {
                status: self.status(),
            },
            WireMessage::LoadTable { table, file, cache } => {
                let loaded = match self.load(&table, &file).await {
                    Ok(_) if cache => self.cache(&table).await,
                    Ok(_) => Ok(()),
                    Err(e) => Err(e),
                };
                match loaded {
                    Ok(()) => {
                        let info = self.table_infos().remove(&table);
                        WireMessage::Loaded {
                            table,
                            partitions: info.as_ref().map_or(0, |i| i.partitions.len() as u32),
                            rows: info.as_ref().map_or(0, |i| i.total_rows),
                            cached: info.is_some_and(|i| i.cached),
                        }
                    }
                    Err(e) => WireMessage::error(&e, None, None),
                }
            }
            other => WireMessage::error(
                &QueryError::new(
                    ErrorCode::Protocol,
                    format!("{} is not a client request", other.kind()),
                ),
                None,
                None,
            ),
        }
    }

    async fn worker_session(
        self,
        mut reader: tokio::net::tcp::OwnedReadHalf,
        mut writer: tokio::net::tcp::OwnedWriteHalf,
        peer: SocketAddr,
        worker_id: String,
        cores: u32,
    ) {
        let conn = self.shared.next_conn.fetch_add(1, Ordering::Relaxed);
        let (tx, mut rx) = mpsc::unbounded_channel::<WireMessage>();
        let rejected = {
            let mut state = self.shared.state.lock().unwrap();
            if worker_id.is_empty() {
                Some("empty worker id".to_string())
            } else if state.workers.get(&worker_id).is_some_and(|w| w.alive) {
                Some(format!("worker id {worker_id} is already registered"))
            } else {
                let seq = state.next_seq;
                state.next_seq += 1;
                state.workers.insert(
                    worker_id.clone(),
                    WorkerEntry {
                        address: peer.to_string(),
                        cores,
                        alive: true,
                        seq,
                        conn,
                        last_heartbeat: Instant::now(),
                        tx: tx.clone(),
                        cached_tables: BTreeSet::new(),
                        partitions: BTreeMap::new(),
                        outstanding: 0,
                        pending_loads: VecDeque::new(),
                    },
                );
                None
            }
        };
        if let Some(reason) = rejected {
            let err = QueryError::new(ErrorCode::Protocol, reason);
            let _ = write_message(&mut writer, &WireMessage::error(&err, None, None)).await;
            return;
        }
        let _ = tx.send(WireMessage::Registered {
            worker_id: worker_id.clone(),
        });
        info!(worker = %worker_id, %peer, cores, "worker registered");
        let writer_task = tokio::spawn(async move {
            while let Some(msg) = rx.recv().await {
                if write_message(&mut writer, &msg).await.is_err() {
                    break;
                }
            }
        });
        drop(tx);

        loop {
            let msg = match read_message(&mut reader).await {
                Ok(Some(m)) => m,
                Ok(None) => break,
                Err(e) => {
                    warn!(worker = %worker_id, error = %e, "bad frame from worker");
                    break;
                }
            };
            let mut state = self.shared.state.lock().unwrap();
            match state.workers.get_mut(&worker_id) {
                Some(w) if w.conn == conn => w.last_heartbeat = Instant::now(),
                _ => break,
            }
            match msg {
                WireMessage::Heartbeat => {}
                WireMessage::Loaded {
                    partitions,
                    rows,
                    cached,
                    ..
                } => {
                    let w = state.workers.get_mut(&worker_id).expect("present");
                    if let Some(ack) = w.pending_loads.pop_front() {
                        let _ = ack.send(Ok((partitions, rows, cached)));
                    }
                }
                WireMessage::Fragment { fragment } => on_fragment(&mut state, &worker_id, fragment),
                WireMessage::Err {
                    query_id: Some(qid),
                    partition_id,
                    code,
                    message,
                } => {
                    let unfinished: Vec<u32> = state
                        .inflight
                        .get(&qid)
                        .map(|q| q.pending.iter().copied().collect())
                        .unwrap_or_default();
                    let at = partition_id
                        .map(|p| format!("partition {p} on "))
                        .unwrap_or_default();
                    state.fail_query(
                        qid,
                        QueryError::new(
                            code,
                            format!("{at}worker {worker_id}: {message}; unfinished partitions {unfinished:?}"),
                        ),
                    );
                }
                WireMessage::Err {
                    query_id: None,
                    code,
                    message,
                    ..
                } => {
                    let w = state.workers.get_mut(&worker_id).expect("present");
                    match w.pending_loads.pop_front() {
                        Some(ack) => {
                            let _ = ack.send(Err(QueryError::new(code, message)));
                        }
                        None => warn!(worker = %worker_id, %message, "worker error"),
                    }
                }
                other => {
                    warn!(worker = %worker_id, kind = other.kind(), "unexpected message from worker")
                }
            }
        }
        let mut state = self.shared.state.lock().unwrap();
        if state
            .workers
            .get(&worker_id)
            .is_some_and(|w| w.conn == conn)
        {
            state.mark_dead(&worker_id, "disconnected");
        }
        writer_task.abort();
    }
}

fn on_fragment(state: &mut State, worker_id: &str, fragment: FragmentResult) {
    let qid = fragment.query_id;
    let Some(q) = state.inflight.get_mut(&qid) else {
        // late fragment of a failed or timed-out query
        return;
    };
    let pid = fragment.partition_id;
    if q.owners.get(&pid).map(String::as_str) != Some(worker_id) || !q.pending.remove(&pid) {
        state.fail_query(
            qid,
            QueryError::internal(format!(
                "unexpected fragment for partition {pid} from {worker_id}"
            )),
        );
        return;
    }
    q.fragments.push(fragment);
    let done = q.pending.is_empty();
    if let Some(w) = state.workers.get_mut(worker_id) {
        w.outstanding = w.outstanding.saturating_sub(1);
    }
    if done {
        let q = state.inflight.remove(&qid).expect("present");
        let _ = q.done.send(Ok(q.fragments));
    }
}

/// Data region of a table as one string, with partition ranges rebased
/// onto it.
fn broadcast_content(table: &TableHandle) -> Result<(String, Vec<PartitionMeta>), QueryError> {
    let info = table.info();
    let (Some(first), Some(last)) = (info.partitions.first(), info.partitions.last()) else {
        return Ok((String::new(), Vec::new()));
    };
    let base = first.range.offset;
    let region = ByteRange {
        offset: base,
        length: last.range.end() - base,
    };
    let bytes = read_range(table.source(), region).map_err(|e| {
        QueryError::new(
            ErrorCode::Io,
            format!("reading {}: {e}", table.source().display()),
        )
    })?;
    let content = String::from_utf8(bytes).map_err(|e| {
        QueryError::new(
            ErrorCode::Io,
            format!("{} is not UTF-8: {e}", table.source().display()),
        )
    })?;
    let metas = info
        .partitions
        .iter()
        .map(|p| PartitionMeta {
            id: p.id,
            range: ByteRange {
                offset: p.range.offset - base,
                length: p.range.length,
            },
            row_count: p.row_count,
        })
        .collect();
    Ok((content, metas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_partitions_three_workers() {
        let ids: Vec<u32> = (0..10).collect();
        let a = assign_round_robin(&ids, 3);
        assert_eq!(a.iter().map(Vec::len).collect::<Vec<_>>(), [4, 3, 3]);
        assert_eq!(a[0], [0, 3, 6, 9]);
    }

    #[test]
    fn no_workers_no_assignment() {
        assert!(assign_round_robin(&[0, 1], 0).is_empty());
    }
}
