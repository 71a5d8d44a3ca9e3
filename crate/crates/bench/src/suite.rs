//! Runs the benchmark queries in each execution mode and checks that every
//! mode returns the same answer.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use logq_cluster::{CoordinatorConfig, LocalCluster};
use logq_core::catalog::{
    builtin_schemas, load_table, Catalog, StorageMode, DEFAULT_PARTITION_BYTES,
};
use logq_core::engine::{EngineOptions, LocalEngine, PlanOptions, QueryResult};
use logq_core::sql::{parse, resolve};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::BenchError;

/// The three timed queries, with their report labels.
pub const QUERIES: [(&str, &str); 3] = [
    ("Query 1", "Select count(*) from tMsg"),
    ("Query 2", "Select * from tFile limit 10"),
    (
        "Query 3",
        "Select count(*) from tMsg join tFile on tMsg.Filepath = tFile.Filepath",
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchMode {
    Single(StorageMode),
    Cluster(StorageMode, usize),
}

impl BenchMode {
    pub fn storage(self) -> StorageMode {
        match self {
            BenchMode::Single(s) | BenchMode::Cluster(s, _) => s,
        }
    }

    pub fn label(self) -> String {
        match self {
            BenchMode::Single(s) => format!("{}-single", s.label()),
            BenchMode::Cluster(s, w) => format!("{}-cluster:{w}", s.label()),
        }
    }
}

impl std::fmt::Display for BenchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for BenchMode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            BenchError::Config(format!(
                "unknown mode {s:?}; expected disk|cached-single or disk|cached-cluster:W"
            ))
        };
        let (storage, rest) = s.split_once('-').ok_or_else(bad)?;
        let storage = StorageMode::from_str(storage).map_err(|_| bad())?;
        match rest.split_once(':') {
            None if rest == "single" => Ok(BenchMode::Single(storage)),
            Some(("cluster", w)) => match w.parse::<usize>() {
                Ok(w) if w > 0 => Ok(BenchMode::Cluster(storage, w)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Comma-separated list of modes.
pub fn parse_modes(s: &str) -> Result<Vec<BenchMode>, BenchError> {
    s.split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub data_dir: PathBuf,
    pub modes: Vec<BenchMode>,
    pub queries: Vec<(String, String)>,
    pub repetitions: usize,
    pub partition_bytes: u64,
    /// Threads for single-process modes and per worker in cluster modes.
    pub cores: usize,
    pub plan: PlanOptions,
}

impl SuiteConfig {
    pub fn new(data_dir: impl Into<PathBuf>, modes: Vec<BenchMode>) -> Self {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        Self {
            data_dir: data_dir.into(),
            modes,
            queries: QUERIES
                .iter()
                .map(|(l, q)| (l.to_string(), q.to_string()))
                .collect(),
            repetitions: 3,
            partition_bytes: DEFAULT_PARTITION_BYTES,
            cores,
            // Counting from metadata would make the cached count free.
            plan: PlanOptions {
                metadata_count: false,
                ..PlanOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub mode: String,
    pub query: String,
    /// Median execution time over the timed repetitions.
    pub elapsed_ms: f64,
    pub samples_ms: Vec<f64>,
    pub row_count: u64,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub cores: usize,
    pub partition_bytes: u64,
    pub repetitions: usize,
    pub workers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub modes: Vec<String>,
    pub queries: Vec<String>,
    pub entries: Vec<BenchEntry>,
    pub environment: Environment,
}

impl BenchReport {
    pub fn entry(&self, mode: &str, query: &str) -> Option<&BenchEntry> {
        self.entries
            .iter()
            .find(|e| e.mode == mode && e.query == query)
    }
}

/// SHA-256 over column names and cell values, length-prefixed so that
/// different splits of the same bytes differ.
pub fn result_digest(result: &QueryResult) -> String {
    let mut h = Sha256::new();
    let mut field = |s: &str| {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    };
    for c in &result.columns {
        field(c);
    }
    for row in &result.rows {
        for v in row {
            field(v);
        }
    }
    h.update(result.row_count.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

struct Timed {
    samples: Vec<f64>,
    last: QueryResult,
}

fn time_runs(
    reps: usize,
    warm_up: bool,
    mut run: impl FnMut() -> Result<QueryResult, BenchError>,
) -> Result<Timed, BenchError> {
    if warm_up {
        run()?;
    }
    let mut samples = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps.max(1) {
        let r = run()?;
        samples.push(r.elapsed_ms);
        last = Some(r);
    }
    Ok(Timed {
        samples,
        last: last.unwrap(),
    })
}

fn single_mode(config: &SuiteConfig, storage: StorageMode) -> Result<Vec<Timed>, BenchError> {
    let mut catalog = Catalog::new();
    let (tfile, tmsg) = builtin_schemas();
    for schema in [tfile, tmsg] {
        let name = schema.name.clone();
        let path = config.data_dir.join(format!("{name}.csv"));
        catalog.register(load_table(&path, schema, config.partition_bytes)?)?;
        if storage == StorageMode::Cached {
            catalog.cache_table(&name)?;
        }
    }
    let engine = LocalEngine::new(EngineOptions {
        plan: config.plan.clone(),
        threads: config.cores,
    });
    config
        .queries
        .iter()
        .map(|(_, sql)| {
            let query = resolve(&parse(sql)?, &catalog)?;
            time_runs(config.repetitions, storage == StorageMode::Cached, || {
                Ok(engine.execute(&query, &catalog, storage)?)
            })
        })
        .collect()
}

fn cluster_mode(
    config: &SuiteConfig,
    storage: StorageMode,
    workers: usize,
) -> Result<Vec<Timed>, BenchError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| BenchError::Config(format!("tokio runtime: {e}")))?;
    rt.block_on(async {
        let coordinator = CoordinatorConfig {
            data_root: config.data_dir.clone(),
            partition_bytes: config.partition_bytes,
            plan: config.plan.clone(),
            query_timeout: Duration::from_secs(600),
            ..CoordinatorConfig::default()
        };
        let cluster = LocalCluster::start(coordinator, workers, config.cores).await?;
        let loaded = cluster
            .load(
                &[("tFile", "tFile.csv"), ("tMsg", "tMsg.csv")],
                storage == StorageMode::Cached,
            )
            .await;
        let mut out = Vec::new();
        let mut failure = loaded.err().map(BenchError::from);
        for (_, sql) in &config.queries {
            if failure.is_some() {
                break;
            }
            let mut samples = Vec::new();
            let mut last = None;
            let runs = config.repetitions.max(1) + usize::from(storage == StorageMode::Cached);
            for i in 0..runs {
                match cluster.coordinator.submit(sql, storage).await {
                    Ok(r) => {
                        if storage != StorageMode::Cached || i > 0 {
                            samples.push(r.elapsed_ms);
                        }
                        last = Some(r);
                    }
                    Err(e) => {
                        failure = Some(e.into());
                        break;
                    }
                }
            }
            if let Some(last) = last.filter(|_| failure.is_none()) {
                out.push(Timed { samples, last });
            }
        }
        cluster.shutdown().await;
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    })
}

/// Runs every query in every mode, one mode at a time.
///
/// Fails with [`BenchError::DigestMismatch`] when two modes disagree on a
/// query's answer.
pub fn run_suite(config: &SuiteConfig) -> Result<BenchReport, BenchError> {
    let mut entries = Vec::new();
    for &mode in &config.modes {
        let timed = match mode {
            BenchMode::Single(s) => single_mode(config, s)?,
            BenchMode::Cluster(s, w) => cluster_mode(config, s, w)?,
        };
        for ((label, _), t) in config.queries.iter().zip(timed) {
            entries.push(BenchEntry {
                mode: mode.label(),
                query: label.clone(),
                elapsed_ms: median(&t.samples),
                row_count: t.last.row_count,
                digest: result_digest(&t.last),
                samples_ms: t.samples,
            });
        }
    }
    for (label, _) in &config.queries {
        let mut seen = entries.iter().filter(|e| &e.query == label);
        if let Some(first) = seen.next() {
            if let Some(other) = seen.find(|e| e.digest != first.digest) {
                return Err(BenchError::DigestMismatch {
                    query: label.clone(),
                    a: first.mode.clone(),
                    b: other.mode.clone(),
                });
            }
        }
    }
    let mut workers: Vec<usize> = config
        .modes
        .iter()
        .filter_map(|m| match m {
            BenchMode::Cluster(_, w) => Some(*w),
            BenchMode::Single(_) => None,
        })
        .collect();
    workers.sort_unstable();
    workers.dedup();
    Ok(BenchReport {
        modes: config.modes.iter().map(|m| m.label()).collect(),
        queries: config.queries.iter().map(|(l, _)| l.clone()).collect(),
        entries,
        environment: Environment {
            cores: config.cores,
            partition_bytes: config.partition_bytes,
            repetitions: config.repetitions,
            workers,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_labels_round_trip() {
        for s in [
            "disk-single",
            "cached-single",
            "cached-cluster:4",
            "disk-cluster:1",
        ] {
            assert_eq!(s.parse::<BenchMode>().unwrap().label(), s);
        }
        for s in [
            "",
            "cached",
            "ram-single",
            "cached-cluster",
            "cached-cluster:0",
            "disk-single:2",
        ] {
            assert!(s.parse::<BenchMode>().is_err(), "{s}");
        }
        assert_eq!(
            parse_modes("disk-single, cached-cluster:2").unwrap().len(),
            2
        );
        assert!(parse_modes("").unwrap().is_empty());
    }

    #[test]
    fn median_of_samples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn digest_separates_fields() {
        let r = |rows: Vec<Vec<&str>>| QueryResult {
            columns: vec!["a".into(), "b".into()],
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(String::from).collect())
                .collect(),
            row_count: 1,
            elapsed_ms: 0.0,
            mode: String::new(),
        };
        assert_ne!(
            result_digest(&r(vec![vec!["ab", ""]])),
            result_digest(&r(vec![vec!["a", "b"]]))
        );
        let mut x = r(vec![vec!["a", "b"]]);
        let y = x.clone();
        x.elapsed_ms = 5.0;
        x.mode = "other".into();
        assert_eq!(result_digest(&x), result_digest(&y));
    }
}
