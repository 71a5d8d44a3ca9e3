use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::catalog::{Catalog, StorageMode};
use crate::error::QueryError;
use crate::sql::ResolvedQuery;

use super::exec::{execute_fragment, metadata_fragment, FragmentResult};
use super::hash::HashIndex;
use super::merge::{merge, QueryResult};
use super::plan::{plan, PhysicalPlan, PlanOptions};

#[derive(Debug, Clone, Default)]
pub struct EngineOptions {
    pub plan: PlanOptions,
    /// Fragment parallelism; 0 means one thread per available core.
    pub threads: usize,
}

/// Single-process executor: one fragment per partition on a thread pool.
pub struct LocalEngine {
    options: EngineOptions,
    pool: rayon::ThreadPool,
}

impl LocalEngine {
    pub fn new(options: EngineOptions) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .thread_name(|i| format!("logq-fragment-{i}"))
            .build()
            .expect("failed to build fragment thread pool");
        Self { options, pool }
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn execute(
        &self,
        query: &ResolvedQuery,
        catalog: &Catalog,
        storage: StorageMode,
    ) -> Result<QueryResult, QueryError> {
        let started = Instant::now();
        let plan = plan(query, storage, &self.options.plan)?;
        let (fragments, expected) = self.pool.install(|| run_fragments(&plan, catalog))?;
        let mut result = merge(0, fragments, &plan, &expected)?;
        result.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        result.mode = format!("{}-single", storage.label());
        Ok(result)
    }
}

impl Default for LocalEngine {
    fn default() -> Self {
        Self::new(EngineOptions::default())
    }
}

/// Builds the broadcast index for a joining plan from the catalog.
pub fn build_side_index(
    plan: &PhysicalPlan,
    catalog: &Catalog,
) -> Result<Option<HashIndex>, QueryError> {
    let Some(join) = &plan.join else {
        return Ok(None);
    };
    let handle = catalog.get(&join.build_table).ok_or_else(|| {
        QueryError::internal(format!("build table {} is not loaded", join.build_table))
    })?;
    let parts = handle
        .partitions()
        .par_iter()
        .map(|slot| catalog.partition(&join.build_table, slot.id, plan.scan.storage, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(HashIndex::build(
        parts,
        join.build_key,
        &join.build_filter,
    )))
}

fn run_fragments(
    plan: &PhysicalPlan,
    catalog: &Catalog,
) -> Result<(Vec<FragmentResult>, Vec<u32>), QueryError> {
    let table = catalog
        .get(&plan.scan.table)
        .ok_or_else(|| QueryError::internal(format!("table {} is not loaded", plan.scan.table)))?;
    let index = build_side_index(plan, catalog)?.map(Arc::new);
    let budget = plan.scan_row_budget();
    let fragments = table
        .partitions()
        .par_iter()
        .map(|slot| {
            if plan.is_metadata_count() {
                return Ok(metadata_fragment(0, slot.id, slot.row_count));
            }
            let part = catalog.partition(&plan.scan.table, slot.id, plan.scan.storage, budget)?;
            execute_fragment(0, plan, &part, index.as_deref())
        })
        .collect::<Result<Vec<_>, QueryError>>()?;
    let expected = table.partitions().iter().map(|p| p.id).collect();
    Ok((fragments, expected))
}

/// Runs a query with default engine options.
pub fn execute_local(
    query: &ResolvedQuery,
    catalog: &Catalog,
    storage: StorageMode,
) -> Result<QueryResult, QueryError> {
    LocalEngine::default().execute(query, catalog, storage)
}
