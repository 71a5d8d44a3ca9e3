use serde::{Deserialize, Serialize};

use crate::catalog::StorageMode;
use crate::error::{ErrorCode, QueryError};
use crate::sql::{BoundColumn, CmpOp, ResolvedProjection, ResolvedQuery};

/// Default largest build side accepted for a broadcast hash join.
pub const DEFAULT_BROADCAST_THRESHOLD: u64 = 256 * 1024 * 1024;
/// Default largest number of rows a query may return.
pub const DEFAULT_ROW_CAP: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub broadcast_threshold: u64,
    /// Answer unfiltered `COUNT(*)` from partition row counts in cached mode.
    pub metadata_count: bool,
    pub row_cap: Option<u64>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            broadcast_threshold: DEFAULT_BROADCAST_THRESHOLD,
            metadata_count: true,
            row_cap: Some(DEFAULT_ROW_CAP),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub table: String,
    /// Column ordinals any later step reads; sorted and unique.
    pub needed: Vec<usize>,
    pub storage: StorageMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub ordinal: usize,
    pub op: CmpOp,
    pub literal: String,
}

impl FilterSpec {
    pub fn matches(&self, value: &str) -> bool {
        self.op.eval(value, &self.literal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub build_table: String,
    pub probe_key: usize,
    pub build_key: usize,
    /// Comparisons on build-side columns, applied while building the index.
    pub build_filter: Vec<FilterSpec>,
    pub build_needed: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSource {
    Probe(usize),
    Build(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputSpec {
    Count { from_metadata: bool },
    Project(Vec<ColumnSource>),
}

/// Per-partition execution recipe. The scanned table is the probe side
/// when the query joins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    pub scan: ScanSpec,
    pub filter: Vec<FilterSpec>,
    pub join: Option<JoinSpec>,
    pub output: OutputSpec,
    pub limit: Option<u64>,
    pub row_cap: Option<u64>,
    pub columns: Vec<String>,
}

impl PhysicalPlan {
    pub fn is_count(&self) -> bool {
        matches!(self.output, OutputSpec::Count { .. })
    }

    pub fn is_metadata_count(&self) -> bool {
        matches!(
            self.output,
            OutputSpec::Count {
                from_metadata: true
            }
        )
    }

    /// Rows a disk scan may stop after: only plain `LIMIT n` scans can stop
    /// before seeing every row.
    pub fn scan_row_budget(&self) -> Option<usize> {
        match (&self.output, self.filter.is_empty(), &self.join, self.limit) {
            (OutputSpec::Project(_), true, None, Some(n)) => {
                Some(n.min(usize::MAX as u64) as usize)
            }
            _ => None,
        }
    }
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Turns a resolved query into a column-pruned physical plan.
///
/// For a join the smaller table (by data bytes; ties go to the JOIN table)
/// becomes the broadcast build side and the other table is scanned.
pub fn plan(
    query: &ResolvedQuery,
    storage: StorageMode,
    options: &PlanOptions,
) -> Result<PhysicalPlan, QueryError> {
    let (probe_side, build_side) = match query.tables.len() {
        1 => (0, None),
        _ => {
            let (from, join) = (&query.tables[0], &query.tables[1]);
            let build = if from.total_bytes < join.total_bytes {
                0
            } else {
                1
            };
            let build_table = &query.tables[build];
            if build_table.total_bytes > options.broadcast_threshold {
                return Err(QueryError::new(
                    ErrorCode::Unsupported,
                    format!(
                        "both {} ({} bytes) and {} ({} bytes) exceed the broadcast join threshold of {} bytes",
                        from.name(),
                        from.total_bytes,
                        join.name(),
                        join.total_bytes,
                        options.broadcast_threshold
                    ),
                ));
            }
            (1 - build, Some(build))
        }
    };
    let source = |col: &BoundColumn| {
        if col.side == probe_side {
            ColumnSource::Probe(col.ordinal)
        } else {
            ColumnSource::Build(col.ordinal)
        }
    };

    let mut probe_needed = Vec::new();
    let mut build_needed = Vec::new();
    let mut filter = Vec::new();
    let mut build_filter = Vec::new();
    for cmp in &query.filter {
        let spec = FilterSpec {
            ordinal: cmp.column.ordinal,
            op: cmp.op,
            literal: cmp.literal.clone(),
        };
        if cmp.column.side == probe_side {
            probe_needed.push(spec.ordinal);
            filter.push(spec);
        } else {
            build_needed.push(spec.ordinal);
            build_filter.push(spec);
        }
    }

    let output = match &query.projection {
        ResolvedProjection::Count => OutputSpec::Count {
            from_metadata: options.metadata_count
                && storage == StorageMode::Cached
                && build_side.is_none()
                && filter.is_empty(),
        },
        ResolvedProjection::Columns(cols) => {
            let sources: Vec<ColumnSource> = cols.iter().map(source).collect();
            for s in &sources {
                match s {
                    ColumnSource::Probe(o) => probe_needed.push(*o),
                    ColumnSource::Build(o) => build_needed.push(*o),
                }
            }
            OutputSpec::Project(sources)
        }
    };

    let join = match (build_side, query.join_keys) {
        (Some(build), Some((from_key, join_key))) => {
            let (probe_key, build_key) = if build == 1 {
                (from_key.ordinal, join_key.ordinal)
            } else {
                (join_key.ordinal, from_key.ordinal)
            };
            probe_needed.push(probe_key);
            build_needed.push(build_key);
            Some(JoinSpec {
                build_table: query.tables[build].name().to_string(),
                probe_key,
                build_key,
                build_filter,
                build_needed: sorted_unique(build_needed),
            })
        }
        (None, None) => None,
        _ => {
            return Err(QueryError::internal(
                "join keys missing for a two-table query",
            ))
        }
    };

    Ok(PhysicalPlan {
        scan: ScanSpec {
            table: query.tables[probe_side].name().to_string(),
            needed: sorted_unique(probe_needed),
            storage,
        },
        filter,
        join,
        output,
        limit: query.limit,
        row_cap: options.row_cap,
        columns: query.output_names(),
    })
}
