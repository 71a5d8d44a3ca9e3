//! One sample message per wire variant and the check against the recorded
//! frames in `crates/cluster/tests/golden`.

use std::collections::BTreeMap;
use std::path::Path;

use logq_cluster::wire::{decode_frame, encode_frame};
use logq_cluster::{ClusterStatus, TableStatus, WireMessage, WorkerStatus};
use logq_core::catalog::{builtin_schemas, ByteRange, PartitionMeta, StorageMode};
use logq_core::engine::{
    ColumnSource, FilterSpec, FragmentPayload, FragmentResult, JoinSpec, OutputSpec, PhysicalPlan,
    QueryResult, ScanSpec,
};
use logq_core::sql::CmpOp;
use logq_core::ErrorCode;

fn meta(id: u32, offset: u64, length: u64, rows: u64) -> PartitionMeta {
    PartitionMeta {
        id,
        range: ByteRange { offset, length },
        row_count: rows,
    }
}

pub fn join_plan() -> PhysicalPlan {
    PhysicalPlan {
        scan: ScanSpec {
            table: "tMsg".into(),
            needed: vec![0, 2],
            storage: StorageMode::Cached,
        },
        filter: vec![FilterSpec {
            ordinal: 2,
            op: CmpOp::Eq,
            literal: "LTE_PHY_Serv_Cell_Measuremnt".into(),
        }],
        join: Some(JoinSpec {
            build_table: "tFile".into(),
            probe_key: 0,
            build_key: 0,
            build_filter: vec![FilterSpec {
                ordinal: 2,
                op: CmpOp::Ne,
                literal: "it's".into(),
            }],
            build_needed: vec![0, 2],
        }),
        output: OutputSpec::Project(vec![ColumnSource::Build(2), ColumnSource::Probe(2)]),
        limit: Some(10),
        row_cap: Some(100_000),
        columns: vec!["tFile.Carrier".into(), "MsgType".into()],
    }
}

pub fn samples() -> Vec<(&'static str, WireMessage)> {
    let (tfile, tmsg) = builtin_schemas();
    let mut partitions = BTreeMap::new();
    partitions.insert("tFile".to_string(), 1);
    partitions.insert("tMsg".to_string(), 4);
    vec![
        ("register", WireMessage::Register { worker_id: "worker-0".into(), cores: 4 }),
        ("registered", WireMessage::Registered { worker_id: "worker-0".into() }),
        (
            "assign_load",
            WireMessage::AssignLoad {
                table: "tMsg".into(),
                schema: tmsg,
                source: "tMsg.csv".into(),
                partitions: vec![meta(0, 51, 67108870, 412000), meta(3, 201326650, 1200, 9)],
            },
        ),
        (
            "broadcast",
            WireMessage::Broadcast {
                table: "tFile".into(),
                schema: tfile,
                content: "/data/milog/Verizon_LGE-VS985/diag_log_20151219_164230_LGE-VS985_Verizon.mi2log,LGE-VS985,Verizon,2015-12-19 16:42:30\n".into(),
                partitions: vec![meta(0, 0, 122, 1)],
            },
        ),
        ("cache", WireMessage::Cache { table: "tMsg".into() }),
        (
            "loaded",
            WireMessage::Loaded { table: "tMsg".into(), partitions: 2, rows: 412009, cached: true },
        ),
        ("exec", WireMessage::Exec { query_id: 17, plan: join_plan(), partitions: vec![0, 3] }),
        (
            "fragment_rows",
            WireMessage::Fragment {
                fragment: FragmentResult {
                    query_id: 17,
                    partition_id: 3,
                    payload: FragmentPayload::Rows {
                        columns: vec![
                            vec!["Verizon".into(), "".into()],
                            vec!["LTE_RRC_OTA_Packet".into(), "quote \" and \\ and é".into()],
                        ],
                        row_count: 2,
                    },
                    rows_scanned: 9,
                },
            },
        ),
        (
            "fragment_count",
            WireMessage::Fragment {
                fragment: FragmentResult {
                    query_id: 18,
                    partition_id: 0,
                    payload: FragmentPayload::PartialCount { count: 412000 },
                    rows_scanned: 0,
                },
            },
        ),
        (
            "err",
            WireMessage::Err {
                query_id: Some(17),
                partition_id: Some(5),
                code: ErrorCode::Protocol,
                message: "partition 5 of tMsg is not assigned to worker-0".into(),
            },
        ),
        (
            "err_load",
            WireMessage::Err {
                query_id: None,
                partition_id: None,
                code: ErrorCode::Io,
                message: "tMsg: No such file or directory (os error 2)".into(),
            },
        ),
        ("heartbeat", WireMessage::Heartbeat),
        ("shutdown", WireMessage::Shutdown),
        (
            "submit",
            WireMessage::Submit { sql: "Select count(*) from tMsg".into(), mode: StorageMode::DiskStream },
        ),
        (
            "result",
            WireMessage::Result {
                result: QueryResult {
                    columns: vec!["count".into()],
                    rows: vec![vec!["2000000".into()]],
                    row_count: 1,
                    elapsed_ms: 12.5,
                    mode: "cached-cluster".into(),
                },
            },
        ),
        ("status_request", WireMessage::StatusRequest),
        (
            "status",
            WireMessage::Status {
                status: ClusterStatus {
                    alive_workers: 1,
                    total_cores: 4,
                    used_cores: 0,
                    workers: vec![WorkerStatus {
                        worker_id: "worker-0".into(),
                        address: "127.0.0.1:50412".into(),
                        cores: 4,
                        alive: true,
                        cached_tables: vec!["tFile".into(), "tMsg".into()],
                        partitions,
                        last_heartbeat_ms: 812,
                    }],
                    tables: vec![TableStatus {
                        name: "tFile".into(),
                        columns: builtin_schemas().0.columns,
                        rows: 2000,
                        bytes: 243000,
                        partitions: 1,
                        cached: true,
                        broadcast: true,
                    }],
                    running_queries: 0,
                },
            },
        ),
        (
            "load_table",
            WireMessage::LoadTable { table: "tMsg".into(), file: "tMsg.csv".into(), cache: true },
        ),
    ]
}

/// Fails to compile when a variant is added without a golden sample.
pub fn variant_name(m: &WireMessage) -> &'static str {
    match m {
        WireMessage::Register { .. } => "register",
        WireMessage::Registered { .. } => "registered",
        WireMessage::AssignLoad { .. } => "assign_load",
        WireMessage::Broadcast { .. } => "broadcast",
        WireMessage::Cache { .. } => "cache",
        WireMessage::Loaded { .. } => "loaded",
        WireMessage::Exec { .. } => "exec",
        WireMessage::Fragment { .. } => "fragment",
        WireMessage::Err { .. } => "err",
        WireMessage::Heartbeat => "heartbeat",
        WireMessage::Shutdown => "shutdown",
        WireMessage::Submit { .. } => "submit",
        WireMessage::Result { .. } => "result",
        WireMessage::StatusRequest => "status_request",
        WireMessage::Status { .. } => "status",
        WireMessage::LoadTable { .. } => "load_table",
    }
}

/// Compares every sample with its recorded frame in `dir`, rewriting the
/// files first when `bless` is set. Returns the number of frames checked.
pub fn check_golden(dir: &Path, bless: bool) -> Result<usize, String> {
    let mut checked = 0;
    for (name, msg) in samples() {
        let path = dir.join(format!("{name}.bin"));
        let frame = encode_frame(&msg).map_err(|e| format!("{name}: {e}"))?;
        if bless {
            std::fs::write(&path, &frame).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        let recorded = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        if frame != recorded {
            return Err(format!("{name}: encoding changed"));
        }
        if decode_frame(&recorded).map_err(|e| format!("{name}: {e}"))? != msg {
            return Err(format!("{name}: decoding changed"));
        }
        let len = u32::from_be_bytes(recorded[..4].try_into().unwrap()) as usize;
        if len != recorded.len() - 4 {
            return Err(format!(
                "{name}: length prefix {len} for {} payload bytes",
                recorded.len() - 4
            ));
        }
        let kind = format!(r#"{{"v":1,"kind":"{}""#, msg.kind());
        if !recorded[4..].starts_with(kind.as_bytes()) {
            return Err(format!("{name}: payload does not start with {kind}"));
        }
        checked += 1;
    }
    Ok(checked)
}
