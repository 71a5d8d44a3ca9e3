use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::csv::{parse_csv_range_limited, split_csv, ByteRange, ColumnarPartition};
use super::{CatalogError, TableSchema};

/// Default size of one partition's source byte range.
pub const DEFAULT_PARTITION_BYTES: u64 = 64 * 1024 * 1024;

/// Where a scan gets its column data from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StorageMode {
    /// Resident column arrays kept across queries.
    Cached,
    /// Re-read and re-parse the source byte range on every query.
    DiskStream,
}

impl StorageMode {
    pub fn label(self) -> &'static str {
        match self {
            StorageMode::Cached => "cached",
            StorageMode::DiskStream => "disk",
        }
    }
}

impl std::str::FromStr for StorageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cached" | "cache" => Ok(StorageMode::Cached),
            "disk" | "diskstream" | "disk_stream" | "disk-stream" => Ok(StorageMode::DiskStream),
            other => Err(format!("unknown execution mode {other:?}")),
        }
    }
}

/// Descriptor of one partition; `resident` is populated once cached.
#[derive(Debug, Clone)]
pub struct PartitionSlot {
    pub id: u32,
    pub range: ByteRange,
    pub row_count: u64,
    pub resident: Option<Arc<ColumnarPartition>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMeta {
    pub id: u32,
    pub range: ByteRange,
    pub row_count: u64,
}

/// Schema-level facts about a table, enough to resolve and plan a query
/// without access to the data itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableInfo {
    pub schema: Arc<TableSchema>,
    pub total_rows: u64,
    pub total_bytes: u64,
    pub partitions: Vec<PartitionMeta>,
    pub cached: bool,
}

impl TableInfo {
    pub fn name(&self) -> &str {
        &self.schema.name
    }
}

/// Anything that can describe tables by exact name.
pub trait SchemaProvider {
    fn table_info(&self, name: &str) -> Option<TableInfo>;
}

#[derive(Debug, Clone)]
pub struct TableHandle {
    schema: Arc<TableSchema>,
    source: PathBuf,
    partitions: Vec<PartitionSlot>,
    cached: bool,
    total_rows: u64,
    total_bytes: u64,
}

impl TableHandle {
    pub fn schema(&self) -> &Arc<TableSchema> {
        &self.schema
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn partitions(&self) -> &[PartitionSlot] {
        &self.partitions
    }

    pub fn is_cached(&self) -> bool {
        self.cached
    }

    pub fn total_rows(&self) -> u64 {
        self.total_rows
    }

    /// Bytes of the data region (header excluded).
    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn info(&self) -> TableInfo {
        TableInfo {
            schema: self.schema.clone(),
            total_rows: self.total_rows,
            total_bytes: self.total_bytes,
            partitions: self
                .partitions
                .iter()
                .map(|p| PartitionMeta {
                    id: p.id,
                    range: p.range,
                    row_count: p.row_count,
                })
                .collect(),
            cached: self.cached,
        }
    }

    /// Estimated resident size once cached: text bytes plus offsets.
    pub fn estimated_resident_bytes(&self) -> u64 {
        let offsets = (self.total_rows + self.partitions.len() as u64)
            * self.schema.width() as u64
            * std::mem::size_of::<usize>() as u64;
        self.total_bytes + offsets
    }

    fn resident_bytes(&self) -> u64 {
        self.partitions
            .iter()
            .filter_map(|p| p.resident.as_ref())
            .map(|p| p.heap_bytes() as u64)
            .sum()
    }
}

/// Counters for reads that went to the source files.
#[derive(Debug, Default)]
pub struct DiskStats {
    reads: AtomicU64,
    bytes: AtomicU64,
    rows: AtomicU64,
}

impl DiskStats {
    pub fn record(&self, bytes: u64, rows: u64) {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.bytes.fetch_add(bytes, Ordering::Relaxed);
        self.rows.fetch_add(rows, Ordering::Relaxed);
    }

    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn bytes(&self) -> u64 {
        self.bytes.load(Ordering::Relaxed)
    }

    pub fn rows(&self) -> u64 {
        self.rows.load(Ordering::Relaxed)
    }
}

/// Reads `range` from `path` into memory.
pub fn read_range(path: &Path, range: ByteRange) -> std::io::Result<Vec<u8>> {
    let mut file = File::open(path)?;
    file.seek(SeekFrom::Start(range.offset))?;
    let mut buf = vec![0u8; range.length as usize];
    file.read_exact(&mut buf)?;
    Ok(buf)
}

/// Reads and parses one partition straight from its source file.
pub fn read_partition(
    path: &Path,
    schema: &TableSchema,
    partition_id: u32,
    range: ByteRange,
    max_rows: Option<usize>,
    stats: Option<&DiskStats>,
) -> Result<ColumnarPartition, CatalogError> {
    let bytes = read_range(path, range).map_err(|source| CatalogError::PartitionIo {
        table: schema.name.clone(),
        partition_id,
        source,
    })?;
    let part = parse_csv_range_limited(&bytes, schema, partition_id, range, max_rows)?;
    if let Some(stats) = stats {
        stats.record(bytes.len() as u64, part.row_count() as u64);
    }
    Ok(part)
}

/// Splits and validates a CSV file, producing an uncached handle.
pub fn load_table(
    path: impl AsRef<Path>,
    schema: TableSchema,
    target_partition_bytes: u64,
) -> Result<TableHandle, CatalogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CatalogError::Open {
        path: path.to_path_buf(),
        source: e,
    })?;
    let size = file.metadata()?.len();
    let ranges = split_csv(size, file, target_partition_bytes)?;
    let counts: Vec<u64> = ranges
        .par_iter()
        .enumerate()
        .map(|(i, range)| {
            read_partition(path, &schema, i as u32, *range, None, None)
                .map(|p| p.row_count() as u64)
        })
        .collect::<Result<_, _>>()?;
    let partitions: Vec<PartitionSlot> = ranges
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(i, (range, rows))| PartitionSlot {
            id: i as u32,
            range: *range,
            row_count: *rows,
            resident: None,
        })
        .collect();
    Ok(TableHandle {
        schema: Arc::new(schema),
        source: path.to_path_buf(),
        total_rows: counts.iter().sum(),
        total_bytes: ranges.iter().map(|r| r.length).sum(),
        partitions,
        cached: false,
    })
}

/// Registry of loaded tables.
///
/// Mutation (register, cache, evict) takes `&mut self`; callers that share
/// a catalog wrap it in a lock.
#[derive(Debug, Default)]
pub struct Catalog {
    tables: BTreeMap<String, TableHandle>,
    memory_limit: Option<u64>,
    disk: Arc<DiskStats>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Caps the total resident bytes of cached tables.
    pub fn with_memory_limit(mut self, bytes: u64) -> Self {
        self.memory_limit = Some(bytes);
        self
    }

    pub fn register(&mut self, handle: TableHandle) -> Result<(), CatalogError> {
        if self.tables.contains_key(handle.name()) {
            return Err(CatalogError::DuplicateTable(handle.name().to_string()));
        }
        self.tables.insert(handle.name().to_string(), handle);
        Ok(())
    }

    pub fn deregister(&mut self, name: &str) -> Option<TableHandle> {
        self.tables.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&TableHandle> {
        self.tables.get(name)
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableHandle> {
        self.tables.values()
    }

    pub fn disk_stats(&self) -> &Arc<DiskStats> {
        &self.disk
    }

    /// Makes every partition of `name` resident. Calling it on a cached table
    /// is a no-op. On failure the table stays uncached.
    pub fn cache_table(&mut self, name: &str) -> Result<&TableHandle, CatalogError> {
        let handle = self
            .tables
            .get(name)
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))?;
        if handle.cached {
            return Ok(&self.tables[name]);
        }
        if let Some(limit) = self.memory_limit {
            let in_use: u64 = self.tables.values().map(TableHandle::resident_bytes).sum();
            let required = handle.estimated_resident_bytes();
            let available = limit.saturating_sub(in_use);
            if required > available {
                return Err(CatalogError::InsufficientMemory {
                    table: name.to_string(),
                    required,
                    available,
                });
            }
        }
        let stats = self.disk.clone();
        let resident: Vec<Arc<ColumnarPartition>> = handle
            .partitions
            .par_iter()
            .map(|slot| {
                read_partition(
                    &handle.source,
                    &handle.schema,
                    slot.id,
                    slot.range,
                    None,
                    Some(&stats),
                )
                .map(Arc::new)
            })
            .collect::<Result<_, _>>()?;
        let handle = self.tables.get_mut(name).expect("checked above");
        for (slot, part) in handle.partitions.iter_mut().zip(resident) {
            slot.row_count = part.row_count() as u64;
            slot.resident = Some(part);
        }
        handle.cached = true;
        Ok(handle)
    }

    /// Drops resident data, returning the table to descriptor-only form.
    pub fn evict(&mut self, name: &str) -> Result<(), CatalogError> {
        let handle = self
            .tables
            .get_mut(name)
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))?;
        for slot in &mut handle.partitions {
            slot.resident = None;
        }
        handle.cached = false;
        Ok(())
    }

    /// Fetches a partition for execution. Cached tables serve resident
    /// arrays in [`StorageMode::Cached`]; everything else reads the file.
    pub fn partition(
        &self,
        table: &str,
        partition_id: u32,
        storage: StorageMode,
        max_rows: Option<usize>,
    ) -> Result<Arc<ColumnarPartition>, CatalogError> {
        let handle = self
            .tables
            .get(table)
            .ok_or_else(|| CatalogError::UnknownTable(table.to_string()))?;
        let slot = handle
            .partitions
            .get(partition_id as usize)
            .ok_or_else(|| CatalogError::UnknownPartition {
                table: table.to_string(),
                partition_id,
            })?;
        if storage == StorageMode::Cached {
            if let Some(part) = &slot.resident {
                return Ok(part.clone());
            }
        }
        read_partition(
            &handle.source,
            &handle.schema,
            slot.id,
            slot.range,
            max_rows,
            Some(&self.disk),
        )
        .map(Arc::new)
    }
}

impl SchemaProvider for Catalog {
    fn table_info(&self, name: &str) -> Option<TableInfo> {
        self.get(name).map(TableHandle::info)
    }
}

impl<T: SchemaProvider + ?Sized> SchemaProvider for &T {
    fn table_info(&self, name: &str) -> Option<TableInfo> {
        (**self).table_info(name)
    }
}

impl SchemaProvider for BTreeMap<String, TableInfo> {
    fn table_info(&self, name: &str) -> Option<TableInfo> {
        self.get(name).cloned()
    }
}
