use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnDef, ColumnType, SchemaProvider, TableInfo};
use crate::error::{ErrorCode, QueryError};

use super::ast::{CmpOp, ColumnName, Projection, Query};
use super::COUNT_COLUMN;

/// A column bound to one of the query's tables: `side` 0 is the FROM
/// table, 1 the JOIN table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundColumn {
    pub side: usize,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub column: BoundColumn,
    pub op: CmpOp,
    pub literal: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolvedProjection {
    Count,
    Columns(Vec<BoundColumn>),
}

/// A query whose names are all bound against concrete table schemas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedQuery {
    pub query: Query,
    /// `[from]` or `[from, join]`.
    pub tables: Vec<TableInfo>,
    pub projection: ResolvedProjection,
    /// `(from-side column, join-side column)`.
    pub join_keys: Option<(BoundColumn, BoundColumn)>,
    pub filter: Vec<BoundComparison>,
    pub limit: Option<u64>,
    pub output: Vec<ColumnDef>,
}

impl ResolvedQuery {
    pub fn output_names(&self) -> Vec<String> {
        self.output.iter().map(|c| c.name.clone()).collect()
    }

    pub fn table(&self, side: usize) -> &TableInfo {
        &self.tables[side]
    }
}

fn lookup_table(catalog: &impl SchemaProvider, name: &str) -> Result<TableInfo, QueryError> {
    catalog
        .table_info(name)
        .ok_or_else(|| QueryError::new(ErrorCode::UnknownTable, format!("unknown table {name}")))
}

fn bind(tables: &[TableInfo], col: &ColumnName) -> Result<BoundColumn, QueryError> {
    if let Some(qualifier) = &col.table {
        let side = tables
            .iter()
            .position(|t| t.name() == qualifier)
            .ok_or_else(|| {
                QueryError::new(
                    ErrorCode::UnknownTable,
                    format!("table {qualifier} is not part of this query"),
                )
            })?;
        let ordinal = tables[side].schema.column_index(&col.name).ok_or_else(|| {
            QueryError::new(ErrorCode::UnknownColumn, format!("unknown column {col}"))
        })?;
        return Ok(BoundColumn { side, ordinal });
    }
    let matches: Vec<BoundColumn> = tables
        .iter()
        .enumerate()
        .filter_map(|(side, t)| {
            t.schema
                .column_index(&col.name)
                .map(|ordinal| BoundColumn { side, ordinal })
        })
        .collect();
    match matches.as_slice() {
        [] => Err(QueryError::new(
            ErrorCode::UnknownColumn,
            format!("unknown column {col}"),
        )),
        [one] => Ok(*one),
        _ => Err(QueryError::new(
            ErrorCode::AmbiguousColumn,
            format!(
                "column {col} exists in both {} and {}; qualify it with a table name",
                tables[0].name(),
                tables[1].name()
            ),
        )),
    }
}

/// Binds table and column names, checks the join condition, and computes
/// the output schema.
pub fn resolve(query: &Query, catalog: &impl SchemaProvider) -> Result<ResolvedQuery, QueryError> {
    let mut tables = vec![lookup_table(catalog, &query.from)?];
    let mut join_keys = None;
    if let Some(join) = &query.join {
        if join.table == query.from {
            return Err(QueryError::new(
                ErrorCode::Unsupported,
                "self-joins are not supported",
            ));
        }
        tables.push(lookup_table(catalog, &join.table)?);
        let left = bind(&tables, &join.left)?;
        let right = bind(&tables, &join.right)?;
        join_keys = match (left.side, right.side) {
            (0, 1) => Some((left, right)),
            (1, 0) => Some((right, left)),
            _ => {
                return Err(QueryError::new(
                    ErrorCode::Unsupported,
                    "join condition must compare a column of each table",
                ))
            }
        };
    }

    let filter = match &query.filter {
        Some(pred) => pred
            .comparisons
            .iter()
            .map(|c| {
                Ok(BoundComparison {
                    column: bind(&tables, &c.column)?,
                    op: c.op,
                    literal: c.literal.clone(),
                })
            })
            .collect::<Result<Vec<_>, QueryError>>()?,
        None => Vec::new(),
    };

    let (projection, output) = match &query.projection {
        Projection::CountStar => (
            ResolvedProjection::Count,
            vec![ColumnDef {
                name: COUNT_COLUMN.into(),
                ty: ColumnType::UInt64,
            }],
        ),
        Projection::Star => {
            let joined = tables.len() > 1;
            let mut cols = Vec::new();
            let mut out = Vec::new();
            for (side, t) in tables.iter().enumerate() {
                for (ordinal, c) in t.schema.columns.iter().enumerate() {
                    cols.push(BoundColumn { side, ordinal });
                    let name = if joined {
                        format!("{}.{}", t.name(), c.name)
                    } else {
                        c.name.clone()
                    };
                    out.push(ColumnDef::text(name));
                }
            }
            (ResolvedProjection::Columns(cols), out)
        }
        Projection::Columns(names) => {
            let cols = names
                .iter()
                .map(|n| bind(&tables, n))
                .collect::<Result<Vec<_>, _>>()?;
            let out = names
                .iter()
                .map(|n| ColumnDef::text(n.to_string()))
                .collect();
            (ResolvedProjection::Columns(cols), out)
        }
    };

    Ok(ResolvedQuery {
        query: query.clone(),
        tables,
        projection,
        join_keys,
        filter,
        limit: query.limit,
        output,
    })
}
