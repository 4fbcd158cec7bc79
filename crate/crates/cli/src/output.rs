//! Data files (CSV or JSON lines), the meta sidecar and the aggregate row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::config::Format;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_VAR: &str = "HYPERHIT_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Bool(bool),
    Missing,
}

impl Cell {
    /// Shortest round-trip decimal form; non-finite values as inf, -inf, NaN.
    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => float_json(*v),
            Cell::Bool(v) => Value::from(*v),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

/// JSON number, or the sentinel strings "inf", "-inf", "NaN".
pub fn float_json(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::from(v.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path, format: Format) -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = BufWriter::new(File::create(path)?);
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(file);
                w.write_record(self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::text))?;
                }
                w.flush()?;
            }
            Format::Jsonl => {
                let mut w = file;
                for row in &self.rows {
                    let obj: Map<String, Value> =
                        self.columns.iter().zip(row).map(|(k, v)| (k.to_string(), v.json())).collect();
                    serde_json::to_writer(&mut w, &obj)?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// Ordered key-value pairs summarizing a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Aggregate(pub Vec<(String, Value)>);

impl Aggregate {
    pub fn put(&mut self, key: impl Into<String>, v: impl Into<Value>) {
        self.0.push((key.into(), v.into()));
    }

    pub fn float(&mut self, key: impl Into<String>, v: f64) {
        self.put(key, float_json(v));
    }

    pub fn opt(&mut self, key: impl Into<String>, v: Option<f64>) {
        self.put(key, v.map_or(Value::Null, float_json));
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.0.iter().cloned().collect())
    }
}

/// Explicit path, else `<dir>/<experiment>-<hash prefix>.<ext>` with dir
/// from the environment variable or the working directory.
pub fn resolve_path(explicit: Option<&Path>, experiment: &str, hash: &str, format: Format) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let dir = std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{experiment}-{}.{}", &hash[..12], format.extension()))
}

pub fn meta_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_meta(path: &Path, meta: &Value) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, meta)?;
    f.write_all(b"\n")?;
    f.flush()
}
