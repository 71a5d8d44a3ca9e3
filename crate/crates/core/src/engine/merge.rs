use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{ErrorCode, QueryError};

use super::exec::{too_large, FragmentPayload, FragmentResult};
use super::plan::PhysicalPlan;

/// Merged, client-facing result of a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub row_count: u64,
    pub elapsed_ms: f64,
    pub mode: String,
}

impl QueryResult {
    /// Equality of everything except timing and mode label.
    pub fn same_data(&self, other: &QueryResult) -> bool {
        self.columns == other.columns
            && self.rows == other.rows
            && self.row_count == other.row_count
    }

    /// The single value of a `COUNT(*)` result.
    pub fn count(&self) -> Option<u64> {
        match self.rows.as_slice() {
            [row] if row.len() == 1 => row[0].parse().ok(),
            _ => None,
        }
    }
}

/// Combines one fragment per expected partition: counts are summed, rows
/// concatenated in partition-id order and cut to the limit.
pub fn merge(
    query_id: u64,
    mut fragments: Vec<FragmentResult>,
    plan: &PhysicalPlan,
    expected_partitions: &[u32],
) -> Result<QueryResult, QueryError> {
    if let Some(f) = fragments.iter().find(|f| f.query_id != query_id) {
        return Err(QueryError::internal(format!(
            "fragment for query {} merged into query {query_id}",
            f.query_id
        )));
    }
    fragments.sort_by_key(|f| f.partition_id);
    if let Some(w) = fragments
        .windows(2)
        .find(|w| w[0].partition_id == w[1].partition_id)
    {
        return Err(QueryError::internal(format!(
            "duplicate fragment for partition {}",
            w[0].partition_id
        )));
    }
    let have: BTreeSet<u32> = fragments.iter().map(|f| f.partition_id).collect();
    let missing: Vec<u32> = expected_partitions
        .iter()
        .copied()
        .filter(|p| !have.contains(p))
        .collect();
    if !missing.is_empty() {
        return Err(QueryError::new(
            ErrorCode::Incomplete,
            format!("missing fragments for partitions {missing:?}"),
        ));
    }
    let expected: BTreeSet<u32> = expected_partitions.iter().copied().collect();
    if let Some(extra) = have.iter().find(|p| !expected.contains(p)) {
        return Err(QueryError::internal(format!(
            "unexpected fragment for partition {extra}"
        )));
    }

    let rows = if plan.is_count() {
        let mut total = 0u64;
        for f in &fragments {
            match f.payload {
                FragmentPayload::PartialCount { count } => total += count,
                FragmentPayload::Rows { .. } => {
                    return Err(QueryError::internal("row fragment in a count query"))
                }
            }
        }
        vec![vec![total.to_string()]]
    } else {
        let limit = plan.limit.unwrap_or(u64::MAX);
        let mut rows: Vec<Vec<String>> = Vec::new();
        'outer: for f in fragments {
            let FragmentPayload::Rows { columns, row_count } = f.payload else {
                return Err(QueryError::internal("count fragment in a row query"));
            };
            if columns.len() != plan.columns.len() {
                return Err(QueryError::internal(format!(
                    "partition {} returned {} columns, expected {}",
                    f.partition_id,
                    columns.len(),
                    plan.columns.len()
                )));
            }
            let mut iters: Vec<_> = columns.into_iter().map(Vec::into_iter).collect();
            for _ in 0..row_count {
                if rows.len() as u64 >= limit {
                    break 'outer;
                }
                let row: Option<Vec<String>> = iters.iter_mut().map(Iterator::next).collect();
                rows.push(row.ok_or_else(|| {
                    QueryError::internal(format!("partition {} has short columns", f.partition_id))
                })?);
            }
        }
        if let Some(cap) = plan.row_cap {
            if rows.len() as u64 > cap && limit > cap {
                return Err(too_large(cap));
            }
        }
        rows
    };
    Ok(QueryResult {
        columns: plan.columns.clone(),
        row_count: rows.len() as u64,
        rows,
        elapsed_ms: 0.0,
        mode: String::new(),
    })
}
