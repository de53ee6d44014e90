use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("schema declares no tables")]
    NoTables,
    #[error("table `{table}` declares column `{column}` twice")]
    DuplicateColumn { table: String, column: String },
    #[error("table `{0}` declared twice")]
    DuplicateTable(String),
    #[error("join key `{0}` does not appear in any table")]
    UnknownJoinKey(String),
    #[error("rows supplied for undeclared table `{0}`")]
    UnknownTable(String),
    #[error("table `{table}` row {row}: {detail}")]
    SchemaRowMismatch {
        table: String,
        row: usize,
        detail: String,
    },
    #[error("schema file: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Integer,
    Real,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDecl {
    pub name: String,
    pub columns: Vec<ColumnDecl>,
    /// CSV row file, relative to the schema file. Defaults to `<name>.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl TableDecl {
    pub fn new(name: &str, columns: &[(&str, ColumnType)]) -> Self {
        TableDecl {
            name: name.to_owned(),
            columns: columns
                .iter()
                .map(|(n, ty)| ColumnDecl {
                    name: (*n).to_owned(),
                    ty: *ty,
                })
                .collect(),
            csv: None,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Schema declaration file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDecl {
    pub tables: Vec<TableDecl>,
    #[serde(default)]
    pub join_keys: Vec<String>,
}

/// A cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Total order used for sorting and grouping: NULL < numbers < text.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        fn rank(v: &Value) -> u8 {
            match v {
                Value::Null => 0,
                Value::Integer(_) | Value::Real(_) => 1,
                Value::Text(_) => 2,
            }
        }
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (a, b) if rank(a) == 1 && rank(b) == 1 => {
                a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())
            }
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }

    fn coerce(self, ty: ColumnType) -> Result<Value, String> {
        match (ty, self) {
            (_, Value::Null) => Ok(Value::Null),
            (ColumnType::Integer, v @ Value::Integer(_)) => Ok(v),
            (ColumnType::Real, Value::Integer(i)) => Ok(Value::Real(i as f64)),
            (ColumnType::Real, v @ Value::Real(_)) => Ok(v),
            (ColumnType::Text, v @ Value::Text(_)) => Ok(v),
            (ty, v) => Err(format!("value {v} does not conform to {ty:?}")),
        }
    }

    fn parse_typed(raw: &str, ty: ColumnType) -> Result<Value, String> {
        if raw.is_empty() {
            return Ok(Value::Null);
        }
        match ty {
            ColumnType::Integer => raw
                .trim()
                .parse()
                .map(Value::Integer)
                .map_err(|_| format!("`{raw}` is not an integer")),
            ColumnType::Real => raw
                .trim()
                .parse()
                .map(Value::Real)
                .map_err(|_| format!("`{raw}` is not a real number")),
            ColumnType::Text => Ok(Value::Text(raw.to_owned())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub decl: TableDecl,
    pub rows: Vec<Vec<Value>>,
}

/// Relational store: declared tables, their rows and the permitted join keys.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredStore {
    tables: Vec<Table>,
    join_keys: Vec<String>,
}

impl StructuredStore {
    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables
            .iter()
            .find(|t| t.decl.name.eq_ignore_ascii_case(name))
    }

    pub fn join_keys(&self) -> &[String] {
        &self.join_keys
    }

    pub fn is_join_key(&self, column: &str) -> bool {
        self.join_keys.iter().any(|k| k.eq_ignore_ascii_case(column))
    }

    pub fn row_count(&self, table: &str) -> Option<usize> {
        self.table(table).map(|t| t.rows.len())
    }

    /// Loads a schema declaration (JSON) and one CSV file per table.
    ///
    /// CSV files carry a header row; empty fields load as NULL. A table
    /// whose CSV file does not exist loads empty.
    pub fn from_schema_file(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let decl: SchemaDecl = serde_json::from_slice(&std::fs::read(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut rows = BTreeMap::new();
        for table in &decl.tables {
            let csv_path = base.join(
                table
                    .csv
                    .clone()
                    .unwrap_or_else(|| PathBuf::from(format!("{}.csv", table.name))),
            );
            if !csv_path.exists() {
                continue;
            }
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .from_path(&csv_path)?;
            let header = reader.headers()?.clone();
            let mut order = Vec::with_capacity(header.len());
            for h in header.iter() {
                let idx = table.column_index(h.trim()).ok_or_else(|| {
                    StoreError::SchemaRowMismatch {
                        table: table.name.clone(),
                        row: 0,
                        detail: format!("CSV header names unknown column `{h}`"),
                    }
                })?;
                order.push(idx);
            }
            let mut table_rows = Vec::new();
            for (i, record) in reader.records().enumerate() {
                let record = record?;
                if record.len() != table.columns.len() || order.len() != table.columns.len() {
                    return Err(StoreError::SchemaRowMismatch {
                        table: table.name.clone(),
                        row: i,
                        detail: format!(
                            "expected {} values, found {}",
                            table.columns.len(),
                            record.len()
                        ),
                    });
                }
                let mut row = vec![Value::Null; table.columns.len()];
                for (field, &idx) in record.iter().zip(&order) {
                    row[idx] = Value::parse_typed(field, table.columns[idx].ty).map_err(
                        |detail| StoreError::SchemaRowMismatch {
                            table: table.name.clone(),
                            row: i,
                            detail,
                        },
                    )?;
                }
                table_rows.push(row);
            }
            rows.insert(table.name.clone(), table_rows);
        }
        load_structured_store(decl, rows)
    }
}

/// Builds a store from a schema declaration and typed rows keyed by table name.
///
/// Integer values are widened for REAL columns; any other type disagreement
/// or arity mismatch is a [`StoreError::SchemaRowMismatch`].
pub fn load_structured_store(
    schema: SchemaDecl,
    mut rows: BTreeMap<String, Vec<Vec<Value>>>,
) -> Result<StructuredStore, StoreError> {
    if schema.tables.is_empty() {
        return Err(StoreError::NoTables);
    }
    let mut names = HashSet::new();
    for t in &schema.tables {
        if !names.insert(t.name.to_ascii_lowercase()) {
            return Err(StoreError::DuplicateTable(t.name.clone()));
        }
        let mut cols = HashSet::new();
        for c in &t.columns {
            if !cols.insert(c.name.to_ascii_lowercase()) {
                return Err(StoreError::DuplicateColumn {
                    table: t.name.clone(),
                    column: c.name.clone(),
                });
            }
        }
    }
    for key in &schema.join_keys {
        if !schema.tables.iter().any(|t| t.column_index(key).is_some()) {
            return Err(StoreError::UnknownJoinKey(key.clone()));
        }
    }
    if let Some(unknown) = rows
        .keys()
        .find(|k| !schema.tables.iter().any(|t| t.name.eq_ignore_ascii_case(k)))
    {
        return Err(StoreError::UnknownTable(unknown.clone()));
    }

    let mut tables = Vec::with_capacity(schema.tables.len());
    for decl in schema.tables {
        let supplied = rows.remove(&decl.name).unwrap_or_default();
        let mut typed = Vec::with_capacity(supplied.len());
        for (i, row) in supplied.into_iter().enumerate() {
            if row.len() != decl.columns.len() {
                return Err(StoreError::SchemaRowMismatch {
                    table: decl.name.clone(),
                    row: i,
                    detail: format!(
                        "expected {} values, found {}",
                        decl.columns.len(),
                        row.len()
                    ),
                });
            }
            let row = row
                .into_iter()
                .zip(&decl.columns)
                .map(|(v, c)| v.coerce(c.ty))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|detail| StoreError::SchemaRowMismatch {
                    table: decl.name.clone(),
                    row: i,
                    detail,
                })?;
            typed.push(row);
        }
        tables.push(Table { decl, rows: typed });
    }
    Ok(StructuredStore {
        tables,
        join_keys: schema.join_keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harvey_schema() -> SchemaDecl {
        SchemaDecl {
            tables: vec![TableDecl::new(
                "harvey_evacuation_data",
                &[("zip_code", ColumnType::Text), ("evacuation_rate", ColumnType::Real)],
            )],
            join_keys: vec!["zip_code".into()],
        }
    }

    fn row(zip: &str, rate: f64) -> Vec<Value> {
        vec![Value::Text(zip.into()), Value::Real(rate)]
    }

    #[test]
    fn empty_table_is_valid() {
        let store = load_structured_store(harvey_schema(), BTreeMap::new()).unwrap();
        assert_eq!(store.row_count("harvey_evacuation_data"), Some(0));
    }

    #[test]
    fn harvey_rows_load() {
        let rows = BTreeMap::from([(
            "harvey_evacuation_data".to_owned(),
            vec![row("77061", 57.14), row("77025", 55.56), row("77005", 55.56)],
        )]);
        let store = load_structured_store(harvey_schema(), rows).unwrap();
        assert_eq!(store.row_count("harvey_evacuation_data"), Some(3));
    }

    #[test]
    fn wrong_arity_rejected() {
        let rows = BTreeMap::from([(
            "harvey_evacuation_data".to_owned(),
            vec![vec![Value::Text("1".into()), Value::Real(1.0), Value::Real(2.0)]],
        )]);
        let err = load_structured_store(harvey_schema(), rows).unwrap_err();
        assert!(matches!(err, StoreError::SchemaRowMismatch { .. }));
    }

    #[test]
    fn wrong_type_rejected() {
        let rows = BTreeMap::from([(
            "harvey_evacuation_data".to_owned(),
            vec![vec![Value::Text("1".into()), Value::Text("high".into())]],
        )]);
        assert!(matches!(
            load_structured_store(harvey_schema(), rows),
            Err(StoreError::SchemaRowMismatch { .. })
        ));
    }

    #[test]
    fn integers_widen_for_real_columns() {
        let rows = BTreeMap::from([(
            "harvey_evacuation_data".to_owned(),
            vec![vec![Value::Text("1".into()), Value::Integer(50)]],
        )]);
        let store = load_structured_store(harvey_schema(), rows).unwrap();
        assert_eq!(store.tables()[0].rows[0][1], Value::Real(50.0));
    }

    #[test]
    fn schema_invariants() {
        let mut s = harvey_schema();
        s.join_keys.push("CBG_ID".into());
        assert!(matches!(
            load_structured_store(s, BTreeMap::new()),
            Err(StoreError::UnknownJoinKey(_))
        ));
        let s = SchemaDecl {
            tables: vec![],
            join_keys: vec![],
        };
        assert!(matches!(load_structured_store(s, BTreeMap::new()), Err(StoreError::NoTables)));
        let s = SchemaDecl {
            tables: vec![TableDecl::new("t", &[("a", ColumnType::Integer), ("A", ColumnType::Real)])],
            join_keys: vec![],
        };
        assert!(matches!(
            load_structured_store(s, BTreeMap::new()),
            Err(StoreError::DuplicateColumn { .. })
        ));
    }

    #[test]
    fn schema_file_with_csv() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("schema.json"),
            serde_json::to_vec(&harvey_schema()).unwrap(),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("harvey_evacuation_data.csv"),
            "evacuation_rate,zip_code\n57.14,77061\n55.56,77025\n",
        )
        .unwrap();
        let store = StructuredStore::from_schema_file(dir.path().join("schema.json")).unwrap();
        let t = store.table("harvey_evacuation_data").unwrap();
        assert_eq!(t.rows[0], row("77061", 57.14));
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn csv_bad_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("schema.json"),
            serde_json::to_vec(&harvey_schema()).unwrap(),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("harvey_evacuation_data.csv"),
            "zip_code,evacuation_rate\n77061,lots\n",
        )
        .unwrap();
        assert!(matches!(
            StructuredStore::from_schema_file(dir.path().join("schema.json")),
            Err(StoreError::SchemaRowMismatch { .. })
        ));
    }
}
