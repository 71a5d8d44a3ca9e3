use std::collections::HashMap;
use std::sync::Arc;

use crate::catalog::ColumnarPartition;

use super::plan::FilterSpec;

/// Join-key index over the build side of a broadcast hash join.
///
/// Row ordinals are global across the build table's partitions, in
/// partition-id order, so bucket lists are ascending.
#[derive(Debug, Clone)]
pub struct HashIndex {
    partitions: Vec<Arc<ColumnarPartition>>,
    starts: Vec<usize>,
    buckets: HashMap<String, Vec<usize>>,
    indexed_rows: usize,
}

impl HashIndex {
    /// Indexes every build row that passes `filter`.
    pub fn build(
        mut partitions: Vec<Arc<ColumnarPartition>>,
        key: usize,
        filter: &[FilterSpec],
    ) -> Self {
        partitions.sort_by_key(|p| p.partition_id());
        let mut starts = Vec::with_capacity(partitions.len());
        let mut buckets: HashMap<String, Vec<usize>> = HashMap::new();
        let mut base = 0;
        let mut indexed_rows = 0;
        for part in &partitions {
            starts.push(base);
            let keys = part.column(key);
            for row in 0..part.row_count() {
                if filter.iter().all(|f| f.matches(part.value(row, f.ordinal))) {
                    let k = keys.get(row);
                    match buckets.get_mut(k) {
                        Some(list) => list.push(base + row),
                        None => {
                            buckets.insert(k.to_string(), vec![base + row]);
                        }
                    }
                    indexed_rows += 1;
                }
            }
            base += part.row_count();
        }
        Self {
            partitions,
            starts,
            buckets,
            indexed_rows,
        }
    }

    pub fn lookup(&self, key: &str) -> &[usize] {
        self.buckets.get(key).map_or(&[], Vec::as_slice)
    }

    pub fn value(&self, ordinal: usize, column: usize) -> &str {
        let part = self.starts.partition_point(|&s| s <= ordinal) - 1;
        self.partitions[part].value(ordinal - self.starts[part], column)
    }

    /// Number of rows present in some bucket.
    pub fn len(&self) -> usize {
        self.indexed_rows
    }

    pub fn is_empty(&self) -> bool {
        self.indexed_rows == 0
    }

    pub fn distinct_keys(&self) -> usize {
        self.buckets.len()
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.buckets.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Indexes all rows of a build table on column `key`.
pub fn build_hash_index(partitions: Vec<Arc<ColumnarPartition>>, key: usize) -> HashIndex {
    HashIndex::build(partitions, key, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ByteRange, TextColumn};

    fn part(id: u32, keys: &[&str]) -> Arc<ColumnarPartition> {
        let col: TextColumn = keys.iter().collect();
        let tag: TextColumn = keys.iter().map(|k| format!("{id}:{k}")).collect();
        Arc::new(
            ColumnarPartition::new(
                id,
                vec![col, tag],
                ByteRange {
                    offset: 0,
                    length: 0,
                },
            )
            .unwrap(),
        )
    }

    #[test]
    fn empty_table() {
        let idx = build_hash_index(vec![], 0);
        assert!(idx.is_empty());
        assert!(idx.lookup("a").is_empty());
        let idx = build_hash_index(vec![part(0, &[])], 0);
        assert_eq!(idx.distinct_keys(), 0);
    }

    #[test]
    fn duplicate_keys_keep_all_rows() {
        let idx = build_hash_index(vec![part(0, &["a", "b", "a"])], 0);
        assert_eq!(idx.lookup("a"), [0, 2]);
        assert_eq!(idx.lookup("b"), [1]);
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn ordinals_span_partitions_in_id_order() {
        let idx = build_hash_index(vec![part(1, &["x", "y"]), part(0, &["y"])], 0);
        assert_eq!(idx.lookup("y"), [0, 2]);
        assert_eq!(idx.value(0, 1), "0:y");
        assert_eq!(idx.value(1, 1), "1:x");
        assert_eq!(idx.value(2, 1), "1:y");
        // every row appears exactly once across buckets
        let mut all: Vec<usize> = idx.buckets().flat_map(|(_, v)| v.iter().copied()).collect();
        all.sort();
        assert_eq!(all, [0, 1, 2]);
    }

    #[test]
    fn filter_restricts_rows() {
        let filter = [FilterSpec {
            ordinal: 1,
            op: crate::sql::CmpOp::Ne,
            literal: "0:a".into(),
        }];
        let idx = HashIndex::build(vec![part(0, &["a", "b", "a"])], 0, &filter);
        assert!(idx.lookup("a").is_empty());
        assert_eq!(idx.len(), 1);
    }
}
