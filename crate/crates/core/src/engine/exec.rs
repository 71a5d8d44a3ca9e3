use serde::{Deserialize, Serialize};

use crate::catalog::ColumnarPartition;
use crate::error::{ErrorCode, QueryError};

use super::hash::HashIndex;
use super::plan::{ColumnSource, OutputSpec, PhysicalPlan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum FragmentPayload {
    /// Output columns, each of length `row_count`.
    Rows {
        columns: Vec<Vec<String>>,
        row_count: u64,
    },
    PartialCount {
        count: u64,
    },
}

/// Partial output of one plan over one partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentResult {
    pub query_id: u64,
    pub partition_id: u32,
    pub payload: FragmentPayload,
    /// Rows examined before the fragment finished or stopped early.
    pub rows_scanned: u64,
}

/// Answers an unfiltered count from the stored partition row count.
pub fn metadata_fragment(query_id: u64, partition_id: u32, row_count: u64) -> FragmentResult {
    FragmentResult {
        query_id,
        partition_id,
        payload: FragmentPayload::PartialCount { count: row_count },
        rows_scanned: 0,
    }
}

/// Runs filter, join probe, projection or count, and the limit early-stop
/// over a single partition.
pub fn execute_fragment(
    query_id: u64,
    plan: &PhysicalPlan,
    partition: &ColumnarPartition,
    index: Option<&HashIndex>,
) -> Result<FragmentResult, QueryError> {
    let partition_id = partition.partition_id();
    if plan.join.is_some() != index.is_some() {
        return Err(QueryError::internal(format!(
            "partition {partition_id}: build index must be supplied exactly when the plan joins"
        )));
    }
    if let Some(max) = plan.scan.needed.iter().max() {
        if *max >= partition.width() {
            return Err(QueryError::internal(format!(
                "partition {partition_id} has {} columns, plan reads ordinal {max}",
                partition.width()
            )));
        }
    }
    let probe_key = plan.join.as_ref().map(|j| j.probe_key);
    let mut rows_scanned = 0u64;

    let payload = match &plan.output {
        OutputSpec::Count { .. } => {
            let mut count = 0u64;
            for row in 0..partition.row_count() {
                rows_scanned += 1;
                if !passes(plan, partition, row) {
                    continue;
                }
                count += match (index, probe_key) {
                    (Some(idx), Some(key)) => idx.lookup(partition.value(row, key)).len() as u64,
                    _ => 1,
                };
            }
            FragmentPayload::PartialCount { count }
        }
        OutputSpec::Project(sources) => {
            let budget = plan.limit.unwrap_or(u64::MAX);
            let mut columns: Vec<Vec<String>> = vec![Vec::new(); sources.len()];
            let mut emitted = 0u64;
            'rows: for row in 0..partition.row_count() {
                if emitted >= budget {
                    break;
                }
                rows_scanned += 1;
                if !passes(plan, partition, row) {
                    continue;
                }
                match (index, probe_key) {
                    (Some(idx), Some(key)) => {
                        for &b in idx.lookup(partition.value(row, key)) {
                            if emitted >= budget {
                                break 'rows;
                            }
                            emit_row(
                                plan,
                                sources,
                                partition,
                                index,
                                Some(b),
                                row,
                                &mut columns,
                                &mut emitted,
                                budget,
                            )?;
                        }
                    }
                    _ => emit_row(
                        plan,
                        sources,
                        partition,
                        index,
                        None,
                        row,
                        &mut columns,
                        &mut emitted,
                        budget,
                    )?,
                }
            }
            FragmentPayload::Rows {
                columns,
                row_count: emitted,
            }
        }
    };
    Ok(FragmentResult {
        query_id,
        partition_id,
        payload,
        rows_scanned,
    })
}

#[allow(clippy::too_many_arguments)]
fn emit_row(
    plan: &PhysicalPlan,
    sources: &[ColumnSource],
    partition: &ColumnarPartition,
    index: Option<&HashIndex>,
    build_row: Option<usize>,
    row: usize,
    columns: &mut [Vec<String>],
    emitted: &mut u64,
    budget: u64,
) -> Result<(), QueryError> {
    for (out, src) in columns.iter_mut().zip(sources) {
        let value = match (*src, build_row, index) {
            (ColumnSource::Probe(o), _, _) => partition.value(row, o),
            (ColumnSource::Build(o), Some(b), Some(idx)) => idx.value(b, o),
            _ => return Err(QueryError::internal("build column without join")),
        };
        out.push(value.to_string());
    }
    *emitted += 1;
    if let Some(cap) = plan.row_cap {
        if *emitted > cap && budget > cap {
            return Err(too_large(cap));
        }
    }
    Ok(())
}

fn passes(plan: &PhysicalPlan, partition: &ColumnarPartition, row: usize) -> bool {
    plan.filter
        .iter()
        .all(|f| f.matches(partition.value(row, f.ordinal)))
}

pub(crate) fn too_large(cap: u64) -> QueryError {
    QueryError::new(
        ErrorCode::ResultTooLarge,
        format!("result exceeds {cap} rows; add a LIMIT clause"),
    )
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::catalog::{ByteRange, StorageMode, TextColumn};
    use crate::engine::hash::build_hash_index;
    use crate::engine::plan::{FilterSpec, JoinSpec, ScanSpec};
    use crate::sql::CmpOp;

    fn partition(rows: usize) -> ColumnarPartition {
        let a: TextColumn = (0..rows).map(|i| format!("k{}", i % 7)).collect();
        let b: TextColumn = (0..rows).map(|i| format!("v{i:06}")).collect();
        ColumnarPartition::new(
            0,
            vec![a, b],
            ByteRange {
                offset: 0,
                length: 0,
            },
        )
        .unwrap()
    }

    fn scan_plan(output: OutputSpec, limit: Option<u64>) -> PhysicalPlan {
        PhysicalPlan {
            scan: ScanSpec {
                table: "t".into(),
                needed: vec![0, 1],
                storage: StorageMode::Cached,
            },
            filter: vec![],
            join: None,
            output,
            limit,
            row_cap: Some(100_000),
            columns: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn count_without_filter() {
        let plan = scan_plan(
            OutputSpec::Count {
                from_metadata: false,
            },
            None,
        );
        let r = execute_fragment(1, &plan, &partition(1000), None).unwrap();
        assert_eq!(r.payload, FragmentPayload::PartialCount { count: 1000 });
        assert_eq!(r.rows_scanned, 1000);
    }

    #[test]
    fn limit_stops_scanning() {
        let plan = scan_plan(OutputSpec::Project(vec![ColumnSource::Probe(1)]), Some(10));
        let r = execute_fragment(1, &plan, &partition(1_000_000), None).unwrap();
        let FragmentPayload::Rows { columns, row_count } = r.payload else {
            panic!()
        };
        assert_eq!(row_count, 10);
        assert_eq!(columns[0][9], "v000009");
        assert!(r.rows_scanned <= 10);
    }

    #[test]
    fn filter_applies_before_limit() {
        let mut plan = scan_plan(OutputSpec::Project(vec![ColumnSource::Probe(1)]), Some(2));
        plan.filter.push(FilterSpec {
            ordinal: 0,
            op: CmpOp::Eq,
            literal: "k3".into(),
        });
        let r = execute_fragment(1, &plan, &partition(100), None).unwrap();
        let FragmentPayload::Rows { columns, .. } = r.payload else {
            panic!()
        };
        assert_eq!(columns[0], ["v000003", "v000010"]);
        assert_eq!(r.rows_scanned, 11);
    }

    #[test]
    fn join_count_matches_nested_loop() {
        // three probe rows whose keys all exist on the build side
        let probe_keys: TextColumn = ["f1", "f2", "f1"].iter().collect();
        let probe = ColumnarPartition::new(
            0,
            vec![probe_keys],
            ByteRange {
                offset: 0,
                length: 0,
            },
        )
        .unwrap();
        let build_keys: TextColumn = ["f1", "f2", "f3"].iter().collect();
        let build = Arc::new(
            ColumnarPartition::new(
                0,
                vec![build_keys],
                ByteRange {
                    offset: 0,
                    length: 0,
                },
            )
            .unwrap(),
        );
        let mut expected = 0;
        for i in 0..probe.row_count() {
            for j in 0..build.row_count() {
                if probe.value(i, 0) == build.value(j, 0) {
                    expected += 1;
                }
            }
        }
        let index = build_hash_index(vec![build], 0);
        let mut plan = scan_plan(
            OutputSpec::Count {
                from_metadata: false,
            },
            None,
        );
        plan.scan.needed = vec![0];
        plan.join = Some(JoinSpec {
            build_table: "b".into(),
            probe_key: 0,
            build_key: 0,
            build_filter: vec![],
            build_needed: vec![0],
        });
        let r = execute_fragment(1, &plan, &probe, Some(&index)).unwrap();
        assert_eq!(r.payload, FragmentPayload::PartialCount { count: expected });
        assert_eq!(expected, 3);
        // index required
        assert!(execute_fragment(1, &plan, &probe, None).is_err());
    }

    #[test]
    fn row_cap_enforced() {
        let mut plan = scan_plan(OutputSpec::Project(vec![ColumnSource::Probe(0)]), None);
        plan.row_cap = Some(5);
        let err = execute_fragment(1, &plan, &partition(10), None).unwrap_err();
        assert_eq!(err.code, ErrorCode::ResultTooLarge);
        plan.limit = Some(5);
        assert!(execute_fragment(1, &plan, &partition(10), None).is_ok());
    }

    #[test]
    fn metadata_fragment_reads_nothing() {
        let r = metadata_fragment(4, 2, 77);
        assert_eq!(r.payload, FragmentPayload::PartialCount { count: 77 });
        assert_eq!(r.rows_scanned, 0);
    }
}
