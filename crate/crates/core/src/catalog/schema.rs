use serde::{Deserialize, Serialize};

use super::CatalogError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnType {
    /// Arbitrary text; every user-table column has this type.
    Text,
    /// Only produced by `COUNT(*)` in result schemas.
    UInt64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

impl ColumnDef {
    pub fn text(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ty: ColumnType::Text,
        }
    }
}

/// Named, ordered, typed columns of a table plus primary-key metadata.
///
/// The primary key is informational only; uniqueness is not enforced at load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub primary_key: Vec<String>,
}

impl TableSchema {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<ColumnDef>,
        primary_key: Vec<String>,
    ) -> Result<Self, CatalogError> {
        let name = name.into();
        if name.is_empty() {
            return Err(CatalogError::InvalidSchema("table name is empty".into()));
        }
        if columns.is_empty() {
            return Err(CatalogError::InvalidSchema(format!(
                "table {name} has no columns"
            )));
        }
        for (i, col) in columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(CatalogError::InvalidSchema(format!(
                    "table {name}: column {i} has an empty name"
                )));
            }
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(CatalogError::InvalidSchema(format!(
                    "table {name}: duplicate column {}",
                    col.name
                )));
            }
            if col.ty != ColumnType::Text {
                return Err(CatalogError::InvalidSchema(format!(
                    "table {name}: column {} must be text",
                    col.name
                )));
            }
        }
        for pk in &primary_key {
            if !columns.iter().any(|c| &c.name == pk) {
                return Err(CatalogError::InvalidSchema(format!(
                    "table {name}: primary key column {pk} is not a column"
                )));
            }
        }
        Ok(Self {
            name,
            columns,
            primary_key,
        })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    /// Parses the plain-text schema definition used for non-builtin tables:
    ///
    /// ```text
    /// table tDevice
    /// Serial   text
    /// Model    varchar(64)
    /// pk Serial
    /// ```
    ///
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_definition(text: &str) -> Result<Self, CatalogError> {
        let mut name = None;
        let mut columns = Vec::new();
        let mut primary_key = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let bad = |msg: &str| {
                CatalogError::InvalidSchema(format!("schema line {}: {msg}", lineno + 1))
            };
            if name.is_none() {
                if head != "table" || rest.len() != 1 {
                    return Err(bad("expected `table <name>`"));
                }
                name = Some(rest[0].to_string());
                continue;
            }
            if head == "pk" {
                if rest.len() != 1 || !primary_key.is_empty() {
                    return Err(bad("expected a single `pk col1,col2` line"));
                }
                primary_key = rest[0].split(',').map(str::to_string).collect();
                continue;
            }
            if rest.len() != 1 {
                return Err(bad("expected `<column> <type>`"));
            }
            let ty = rest[0].to_ascii_lowercase();
            if ty != "text" && !(ty.starts_with("varchar(") && ty.ends_with(')')) {
                return Err(bad("column type must be text or varchar(n)"));
            }
            columns.push(ColumnDef::text(head));
        }
        let name = name.ok_or_else(|| CatalogError::InvalidSchema("missing table line".into()))?;
        Self::new(name, columns, primary_key)
    }

    /// Inverse of [`TableSchema::parse_definition`].
    pub fn to_definition(&self) -> String {
        let mut out = format!("table {}\n", self.name);
        for col in &self.columns {
            out.push_str(&col.name);
            out.push_str(" text\n");
        }
        if !self.primary_key.is_empty() {
            out.push_str("pk ");
            out.push_str(&self.primary_key.join(","));
            out.push('\n');
        }
        out
    }
}

pub const TFILE: &str = "tFile";
pub const TMSG: &str = "tMsg";

/// The two log tables: `tFile` (one row per log file) and `tMsg` (one row
/// per decoded message), joined on `Filepath`.
pub fn builtin_schemas() -> (TableSchema, TableSchema) {
    let text = |names: &[&str]| names.iter().map(|n| ColumnDef::text(*n)).collect();
    let tfile = TableSchema {
        name: TFILE.into(),
        columns: text(&["Filepath", "Phone", "Carrier", "Timestamp"]),
        primary_key: vec!["Filepath".into()],
    };
    let tmsg = TableSchema {
        name: TMSG.into(),
        columns: text(&[
            "Filepath",
            "Timestamp",
            "MsgType",
            "MsgHash",
            "MsgPath",
            "LineNo",
        ]),
        primary_key: vec!["Filepath".into(), "Timestamp".into(), "LineNo".into()],
    };
    (tfile, tmsg)
}
