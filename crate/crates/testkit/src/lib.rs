//! Test support shared by the workspace's test suites: a naive
//! row-at-a-time reference evaluator and seeded generators for small
//! schema-conforming instances and grammar-conforming queries.
//!
//! The evaluator works on in-memory rows and shares nothing with the engine
//! beyond the query AST and schema types.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use logq_core::catalog::{builtin_schemas, TableSchema};
use logq_core::sql::{CmpOp, ColumnName, Comparison, JoinClause, Predicate, Projection, Query};
use rand::seq::SliceRandom;
use rand::Rng;

/// A table held as plain rows.
#[derive(Debug, Clone)]
pub struct RowTable {
    pub schema: TableSchema,
    pub rows: Vec<Vec<String>>,
}

impl RowTable {
    /// Data-region size of the CSV form (header excluded).
    pub fn data_bytes(&self) -> u64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(String::len).sum::<usize>() + r.len()) as u64)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out: String = self
            .schema
            .columns
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    fn col(&self, name: &str) -> Option<usize> {
        self.schema.columns.iter().position(|c| c.name == name)
    }
}

/// Result of the reference evaluator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn compare(value: &str, op: CmpOp, literal: &str) -> bool {
    let a = value.as_bytes();
    let b = literal.as_bytes();
    match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
    }
}

/// A row of the (possibly joined) input, viewed by table name.
struct Combined<'a> {
    parts: Vec<(&'a RowTable, &'a [String])>,
}

impl Combined<'_> {
    fn get(&self, col: &ColumnName) -> Option<&str> {
        let mut found = None;
        for (table, row) in &self.parts {
            if let Some(q) = &col.table {
                if &table.schema.name != q {
                    continue;
                }
            }
            if let Some(i) = table.col(&col.name) {
                if found.is_some() {
                    return None;
                }
                found = Some(row[i].as_str());
            }
        }
        found
    }
}

/// Evaluates `query` by brute force: full scans, nested-loop join.
///
/// Row order: without a join, file order. With a join, the larger table
/// (by CSV data bytes; ties make the FROM table the larger) drives the outer
/// loop and the other table the inner loop, each in file order.
pub fn reference_eval(query: &Query, tables: &[RowTable]) -> Result<RefResult, String> {
    let find = |name: &str| {
        tables
            .iter()
            .find(|t| t.schema.name == name)
            .ok_or_else(|| format!("no table {name}"))
    };
    let from = find(&query.from)?;
    let joined = match &query.join {
        Some(j) => Some((find(&j.table)?, j)),
        None => None,
    };
    let mut inputs: Vec<Combined> = Vec::new();
    match joined {
        None => {
            for row in &from.rows {
                inputs.push(Combined {
                    parts: vec![(from, row.as_slice())],
                });
            }
        }
        Some((other, clause)) => {
            let from_is_outer = from.data_bytes() >= other.data_bytes();
            let (outer, inner) = if from_is_outer {
                (from, other)
            } else {
                (other, from)
            };
            for orow in &outer.rows {
                for irow in &inner.rows {
                    let c = if from_is_outer {
                        Combined {
                            parts: vec![(from, orow.as_slice()), (other, irow.as_slice())],
                        }
                    } else {
                        Combined {
                            parts: vec![(from, irow.as_slice()), (other, orow.as_slice())],
                        }
                    };
                    let l = c.get(&clause.left).ok_or("bad join column")?;
                    let r = c.get(&clause.right).ok_or("bad join column")?;
                    if l == r {
                        inputs.push(c);
                    }
                }
            }
        }
    }
    let mut selected = Vec::new();
    for c in inputs {
        let mut keep = true;
        if let Some(pred) = &query.filter {
            for cmp in &pred.comparisons {
                let v = c.get(&cmp.column).ok_or("bad filter column")?;
                keep &= compare(v, cmp.op, &cmp.literal);
            }
        }
        if keep {
            selected.push(c);
        }
    }

    let multi = query.join.is_some();
    match &query.projection {
        Projection::CountStar => Ok(RefResult {
            columns: vec!["count".into()],
            rows: vec![vec![selected.len().to_string()]],
        }),
        Projection::Star => {
            let mut order = vec![from];
            if let Some((other, _)) = joined {
                order.push(other);
            }
            let columns = order
                .iter()
                .flat_map(|t| {
                    t.schema.columns.iter().map(move |c| {
                        if multi {
                            format!("{}.{}", t.schema.name, c.name)
                        } else {
                            c.name.clone()
                        }
                    })
                })
                .collect();
            let mut rows = Vec::new();
            for c in selected.iter().take(limit(query)) {
                let mut row = Vec::new();
                for t in &order {
                    let (_, values) = c
                        .parts
                        .iter()
                        .find(|(pt, _)| pt.schema.name == t.schema.name)
                        .unwrap();
                    row.extend(values.iter().cloned());
                }
                rows.push(row);
            }
            Ok(RefResult { columns, rows })
        }
        Projection::Columns(cols) => {
            let columns = cols.iter().map(|c| c.to_string()).collect();
            let mut rows = Vec::new();
            for c in selected.iter().take(limit(query)) {
                rows.push(
                    cols.iter()
                        .map(|col| c.get(col).map(str::to_string).ok_or("bad column"))
                        .collect::<Result<Vec<_>, _>>()?,
                );
            }
            Ok(RefResult { columns, rows })
        }
    }
}

fn limit(query: &Query) -> usize {
    query
        .limit
        .map_or(usize::MAX, |n| n.min(usize::MAX as u64) as usize)
}

const CARRIERS: [&str; 5] = ["Verizon", "T-Mobile", "AT&T", "Sprint", ""];
const PHONES: [&str; 4] = ["LGE-VS985", "SM-G900V", "Nexus6P", ""];
const MSG_TYPES: [&str; 4] = [
    "LTE_PHY_Serv_Cell_Measuremnt",
    "LTE_RRC_OTA_Packet",
    "WCDMA_RRC_Serv_Cell_Info",
    "LTE_NAS_EMM_State",
];

/// Random tFile/tMsg instance. tFile file paths are drawn from a small pool
/// (duplicates possible), tMsg file paths from a slightly larger pool so
/// some rows find no partner.
pub fn random_instance(
    rng: &mut impl Rng,
    max_tfile: usize,
    max_tmsg: usize,
) -> (RowTable, RowTable) {
    let (tfile_schema, tmsg_schema) = builtin_schemas();
    let nfile = rng.gen_range(0..=max_tfile);
    let nmsg = rng.gen_range(0..=max_tmsg);
    let pool = (nfile + 2).max(3);
    let path = |i: usize| format!("/data/Verizon_LGE-VS985/diag_log_{i:04}.mi2log");
    let stamp = |rng: &mut dyn rand::RngCore| {
        format!(
            "2015-12-1{} 10:0{}:00",
            rng.gen_range(0..3),
            rng.gen_range(0..4)
        )
    };
    let tfile_rows = (0..nfile)
        .map(|_| {
            vec![
                path(rng.gen_range(0..pool)),
                PHONES.choose(rng).unwrap().to_string(),
                CARRIERS.choose(rng).unwrap().to_string(),
                stamp(rng),
            ]
        })
        .collect();
    let tmsg_rows = (0..nmsg)
        .map(|i| {
            vec![
                path(rng.gen_range(0..pool + 2)),
                stamp(rng),
                MSG_TYPES.choose(rng).unwrap().to_string(),
                format!("{:08x}", rng.gen::<u32>()),
                format!("/msg/{}", rng.gen_range(0..5)),
                i.to_string(),
            ]
        })
        .collect();
    (
        RowTable {
            schema: tfile_schema,
            rows: tfile_rows,
        },
        RowTable {
            schema: tmsg_schema,
            rows: tmsg_rows,
        },
    )
}

/// Writes `<dir>/<prefix>tFile.csv` and `<dir>/<prefix>tMsg.csv`.
pub fn write_instance(
    dir: &Path,
    prefix: &str,
    tfile: &RowTable,
    tmsg: &RowTable,
) -> io::Result<(PathBuf, PathBuf)> {
    let a = dir.join(format!("{prefix}tFile.csv"));
    let b = dir.join(format!("{prefix}tMsg.csv"));
    fs::write(&a, tfile.to_csv())?;
    fs::write(&b, tmsg.to_csv())?;
    Ok((a, b))
}

fn literal_for(rng: &mut impl Rng, table: &RowTable, col: usize) -> String {
    if !table.rows.is_empty() && rng.gen_bool(0.7) {
        let row = table.rows.choose(rng).unwrap();
        return row[col].clone();
    }
    ["", "A", "Verizon", "2015-12-11", "/data", "LTE", "5", "zzz"]
        .choose(rng)
        .unwrap()
        .to_string()
}

/// Random query over the instance's two tables, always resolvable.
pub fn random_query(rng: &mut impl Rng, tfile: &RowTable, tmsg: &RowTable) -> Query {
    let (from, other) = if rng.gen_bool(0.5) {
        (tfile, tmsg)
    } else {
        (tmsg, tfile)
    };
    let join = rng.gen_bool(0.4);
    let mut sides = vec![from];
    let join_clause = if join {
        sides.push(other);
        let key = if rng.gen_bool(0.85) {
            "Filepath"
        } else {
            "Timestamp"
        };
        let a = ColumnName::qualified(from.schema.name.clone(), key);
        let b = ColumnName::qualified(other.schema.name.clone(), key);
        let (left, right) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        Some(JoinClause {
            table: other.schema.name.clone(),
            left,
            right,
        })
    } else {
        None
    };
    let pick_column = |rng: &mut dyn rand::RngCore| -> (ColumnName, usize, usize) {
        let side = rng.gen_range(0..sides.len());
        let t = sides[side];
        let ci = rng.gen_range(0..t.schema.columns.len());
        let name = t.schema.columns[ci].name.clone();
        let ambiguous = sides.len() > 1
            && sides[1 - side]
                .schema
                .columns
                .iter()
                .any(|c| c.name == name);
        let col = if ambiguous || rng.gen_bool(0.3) {
            ColumnName::qualified(t.schema.name.clone(), name)
        } else {
            ColumnName::bare(name)
        };
        (col, side, ci)
    };
    let projection = match rng.gen_range(0..3) {
        0 => Projection::Star,
        1 => Projection::CountStar,
        _ => {
            let n = rng.gen_range(1..=4);
            Projection::Columns((0..n).map(|_| pick_column(rng).0).collect())
        }
    };
    let filter = if rng.gen_bool(0.5) {
        let n = rng.gen_range(1..=3);
        let comparisons = (0..n)
            .map(|_| {
                let (column, side, ci) = pick_column(rng);
                Comparison {
                    column,
                    op: *CmpOp::ALL.choose(rng).unwrap(),
                    literal: literal_for(rng, sides[side], ci),
                }
            })
            .collect();
        Some(Predicate { comparisons })
    } else {
        None
    };
    let limit = if rng.gen_bool(0.4) {
        Some(rng.gen_range(0..25))
    } else {
        None
    };
    Query {
        projection,
        from: from.schema.name.clone(),
        join: join_clause,
        filter,
        limit,
    }
}

/// Injection-style inputs: DDL, DML, stacked statements, comment tricks,
/// quoting tricks and other text that must never be executed.
pub fn injection_corpus() -> Vec<String> {
    let fixed = [
        "DROP TABLE tMsg",
        "DROP TABLE tFile;",
        "drop table tMsg",
        "DELETE FROM tMsg",
        "DELETE FROM tFile WHERE Phone = 'x'",
        "INSERT INTO tFile VALUES('x')",
        "INSERT INTO tMsg SELECT * FROM tMsg",
        "UPDATE tFile SET Carrier = 'x'",
        "UPDATE tMsg SET LineNo = '0' WHERE 1 = 1",
        "TRUNCATE tMsg",
        "TRUNCATE TABLE tFile",
        "CREATE TABLE t (a TEXT)",
        "CREATE INDEX i ON tMsg (Filepath)",
        "ALTER TABLE tMsg ADD COLUMN x TEXT",
        "GRANT ALL ON tMsg TO public",
        "REVOKE ALL ON tMsg FROM public",
        "REPLACE INTO tFile VALUES ('a','b','c','d')",
        "MERGE INTO tFile USING tMsg ON 1 = 1",
        "EXEC xp_cmdshell 'ls'",
        "CALL shutdown()",
        "SHUTDOWN",
        "ATTACH DATABASE '/tmp/x' AS x",
        "PRAGMA writable_schema = 1",
        "SET autocommit = 0",
        "LOAD DATA INFILE '/etc/passwd' INTO TABLE tFile",
        "COPY tFile TO '/tmp/out.csv'",
        "WITH x AS (SELECT * FROM tMsg) DELETE FROM tMsg",
        "EXPLAIN SELECT * FROM tMsg",
        "SELECT 1; DROP TABLE tMsg",
        "SELECT * FROM tMsg; DROP TABLE tMsg",
        "SELECT * FROM tMsg; DROP TABLE tMsg;",
        "SELECT * FROM tFile;DELETE FROM tFile",
        "SELECT * FROM tMsg LIMIT 10; INSERT INTO tFile VALUES('x')",
        "SELECT * FROM tMsg;;",
        "SELECT * FROM tMsg -- ; DROP TABLE tMsg",
        "SELECT * FROM tMsg /* */ ; DROP TABLE tMsg",
        "SELECT * FROM tMsg WHERE Filepath = '' OR '1'='1'",
        "SELECT * FROM tMsg WHERE Filepath = 'x' OR 1 = 1",
        "SELECT * FROM tMsg WHERE Filepath = 'x'; DROP TABLE tMsg; --'",
        "SELECT * FROM tMsg WHERE Filepath = 'x' UNION SELECT * FROM tFile",
        "SELECT * FROM tMsg UNION ALL SELECT * FROM tMsg",
        "SELECT * FROM (SELECT * FROM tMsg)",
        "SELECT * FROM tMsg WHERE Filepath IN (SELECT Filepath FROM tFile)",
        "SELECT * FROM tMsg WHERE Filepath = 'unterminated",
        "SELECT * FROM tMsg WHERE Filepath = \"x\" OR \"1\"=\"1\"",
        "SELECT sleep(10) FROM tMsg",
        "SELECT load_file('/etc/passwd') FROM tFile",
        "SELECT * INTO OUTFILE '/tmp/x' FROM tMsg",
        "SELECT * FROM tMsg ORDER BY 1",
        "SELECT * FROM tMsg LIMIT 10 OFFSET 5",
        "SELECT * FROM tMsg LIMIT -1",
        "SELECT * FROM tMsg LIMIT 1e9",
        "SELECT * FROM sqlite_master",
        "SELECT * FROM information_schema.tables",
        "SELECT Phone FROM tMsg",
        "'; DROP TABLE tMsg; --",
        "\" OR \"\" = \"",
        "1 OR 1=1",
        "",
        ";",
        "   ",
        "\u{0}SELECT * FROM tMsg",
        "SELECT * FROM tMsg\u{0}; DROP TABLE tMsg",
        "SELECT\u{feff} * FROM tMsg; DELETE FROM tMsg",
        "BEGIN; DROP TABLE tMsg; COMMIT",
    ];
    fixed.iter().map(|s| s.to_string()).collect()
}
