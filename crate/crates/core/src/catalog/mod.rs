//! Table schemas, CSV ingestion into columnar partitions, and the registry
//! of loaded tables.

mod csv;
mod schema;
mod table;

use std::path::PathBuf;

pub use csv::{
    parse_csv_range, parse_csv_range_limited, split_csv, ByteRange, ColumnarPartition, TextColumn,
    FIELD_SEPARATOR, RECORD_TERMINATOR,
};
pub use schema::{builtin_schemas, ColumnDef, ColumnType, TableSchema, TFILE, TMSG};
pub use table::{
    load_table, read_partition, read_range, Catalog, DiskStats, PartitionMeta, PartitionSlot,
    SchemaProvider, StorageMode, TableHandle, TableInfo, DEFAULT_PARTITION_BYTES,
};

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("table {table}, partition {partition_id}: {source}")]
    PartitionIo {
        table: String,
        partition_id: u32,
        source: std::io::Error,
    },
    #[error("table {table}, partition {partition_id}, line {line}: {reason}")]
    Ingest {
        table: String,
        partition_id: u32,
        line: usize,
        reason: String,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("table {0} is already registered")]
    DuplicateTable(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {table} has no partition {partition_id}")]
    UnknownPartition { table: String, partition_id: u32 },
    #[error(
        "not enough memory to cache {table}: {required} bytes required, {available} available"
    )]
    InsufficientMemory {
        table: String,
        required: u64,
        available: u64,
    },
}
