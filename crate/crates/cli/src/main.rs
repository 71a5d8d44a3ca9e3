use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use logq_bench::{
    generate, parse_modes, render_report, run_suite, GenSpec, ReportFormat, SuiteConfig,
};
use logq_cluster::{spawn_worker, Coordinator, CoordinatorClient, CoordinatorConfig, WorkerConfig};
use logq_core::catalog::{StorageMode, DEFAULT_PARTITION_BYTES};
use logq_core::engine::EngineOptions;
use logq_service::{EmbeddedBackend, QueryBackend, QueryService, RemoteBackend, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "logq",
    version,
    about = "Distributed in-memory log query service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the coordinator.
    Coordinator(CoordinatorArgs),
    /// Run a worker that registers with a coordinator.
    Worker(WorkerArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Load a table on a running coordinator.
    Load(LoadArgs),
    /// Run one query against a running coordinator and print the result.
    Query(QueryArgs),
    /// Write synthetic tFile.csv and tMsg.csv.
    Gen(GenArgs),
    /// Time the benchmark queries across execution modes.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CoordinatorArgs {
    #[arg(long, default_value = "127.0.0.1:7070")]
    listen: String,
    #[arg(long, default_value = ".")]
    data_root: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PARTITION_BYTES)]
    partition_bytes: u64,
    #[arg(long, default_value_t = 2000)]
    heartbeat_ms: u64,
    #[arg(long, default_value_t = 60)]
    query_timeout_s: u64,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long, default_value = "127.0.0.1:7070")]
    coordinator: String,
    #[arg(long)]
    id: String,
    /// Fragment threads; defaults to the available cores.
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long, default_value = ".")]
    data_root: PathBuf,
    #[arg(long, default_value_t = 2000)]
    heartbeat_ms: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
    #[arg(long, conflicts_with = "embedded")]
    coordinator: Option<String>,
    /// Run queries in this process instead of on a cluster.
    #[arg(long, requires = "data_root")]
    embedded: bool,
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Cache tables on startup in embedded mode.
    #[arg(long)]
    cache: bool,
    #[arg(long, default_value_t = DEFAULT_PARTITION_BYTES)]
    partition_bytes: u64,
}

#[derive(Args)]
struct LoadArgs {
    #[arg(long, default_value = "127.0.0.1:7070")]
    coordinator: String,
    #[arg(long)]
    table: String,
    /// Path relative to the workers' data root; defaults to `<table>.csv`.
    #[arg(long)]
    file: Option<String>,
    #[arg(long)]
    cache: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, default_value = "127.0.0.1:7070")]
    coordinator: String,
    #[arg(long, default_value = "cached")]
    mode: StorageMode,
    sql: String,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2_000)]
    tfile: u64,
    #[arg(long, default_value_t = 2_000_000)]
    tmsg: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "disk-single,cached-single,cached-cluster:2")]
    modes: String,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    #[arg(long, default_value_t = DEFAULT_PARTITION_BYTES)]
    partition_bytes: u64,
    /// Threads per process or worker; defaults to the available cores.
    #[arg(long)]
    cores: Option<usize>,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Gen(a) => {
            let truth = generate(&GenSpec::new(a.tfile, a.tmsg, a.seed), &a.out)?;
            println!(
                "wrote {} tFile rows and {} tMsg rows to {} (join count {})",
                truth.tfile_rows,
                truth.tmsg_rows,
                a.out.display(),
                truth.join_count
            );
            Ok(())
        }
        Command::Bench(a) => {
            let mut config = SuiteConfig::new(&a.data, parse_modes(&a.modes)?);
            config.repetitions = a.reps;
            config.partition_bytes = a.partition_bytes;
            if let Some(c) = a.cores {
                config.cores = c;
            }
            let report = run_suite(&config)?;
            print!("{}", render_report(&report, a.format));
            Ok(())
        }
        command => tokio::runtime::Runtime::new()?.block_on(run_async(command)),
    }
}

async fn run_async(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Coordinator(a) => {
            let config = CoordinatorConfig {
                listen: a.listen,
                data_root: a.data_root,
                partition_bytes: a.partition_bytes,
                heartbeat_interval: Duration::from_millis(a.heartbeat_ms),
                query_timeout: Duration::from_secs(a.query_timeout_s),
                ..CoordinatorConfig::default()
            };
            let coordinator = Coordinator::start(config)
                .await
                .context("starting coordinator")?;
            tracing::info!("coordinator listening on {}", coordinator.local_addr());
            tokio::signal::ctrl_c().await?;
            coordinator.shutdown();
            Ok(())
        }
        Command::Worker(a) => {
            let mut config = WorkerConfig::new(a.coordinator, &a.id, &a.data_root);
            if let Some(c) = a.cores {
                config.cores = c;
            }
            config.heartbeat_interval = Duration::from_millis(a.heartbeat_ms);
            let worker = spawn_worker(config);
            tokio::select! {
                r = worker.join() => r?,
                _ = tokio::signal::ctrl_c() => {}
            }
            Ok(())
        }
        Command::Serve(a) => {
            let backend: Arc<dyn QueryBackend> = match (a.coordinator, a.embedded, a.data_root) {
                (Some(addr), false, _) => {
                    Arc::new(RemoteBackend::new(CoordinatorClient::new(addr)))
                }
                (None, true, Some(root)) => {
                    let root2 = root.clone();
                    let backend = tokio::task::spawn_blocking(move || {
                        EmbeddedBackend::open(
                            &root2,
                            a.partition_bytes,
                            a.cache,
                            EngineOptions::default(),
                        )
                    })
                    .await??;
                    tracing::info!("embedded engine over {}", root.display());
                    Arc::new(backend)
                }
                _ => bail!("pass either --coordinator H:P or --embedded --data-root PATH"),
            };
            let config = ServiceConfig::from_env().map_err(anyhow::Error::msg)?;
            let listener = tokio::net::TcpListener::bind(&a.listen)
                .await
                .with_context(|| format!("binding {}", a.listen))?;
            tracing::info!("serving on http://{}", listener.local_addr()?);
            logq_service::serve(listener, Arc::new(QueryService::new(backend, config))).await?;
            Ok(())
        }
        Command::Load(a) => {
            let file = a.file.unwrap_or_else(|| format!("{}.csv", a.table));
            let client = CoordinatorClient::new(a.coordinator);
            let (partitions, rows, cached) = client.load_table(&a.table, &file, a.cache).await?;
            println!(
                "{}: {rows} rows in {partitions} partitions{}",
                a.table,
                if cached { ", cached" } else { "" }
            );
            Ok(())
        }
        Command::Query(a) => {
            let client = CoordinatorClient::new(a.coordinator);
            let result = client.submit(&a.sql, a.mode).await?;
            println!("{}", result.columns.join("\t"));
            for row in &result.rows {
                println!("{}", row.join("\t"));
            }
            eprintln!(
                "{} rows in {:.2} ms ({})",
                result.row_count, result.elapsed_ms, result.mode
            );
            Ok(())
        }
        Command::Gen(_) | Command::Bench(_) => unreachable!("handled synchronously"),
    }
}
