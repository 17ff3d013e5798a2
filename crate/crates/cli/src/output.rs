//! Tabular output rendered as CSV or JSON.
//!
//! CSV: `# key=value` metadata lines, then each table as a header row and
//! data rows, LF line endings. Floats use the shortest representation that
//! parses back to the same `f64`. JSON: one object whose key order is fixed
//! by construction.

use std::fmt::Write as _;

use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
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

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => float_json(*v),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
        }
    }

    fn to_csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => csv_escape(s),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

/// Shortest round-trip decimal; exponent notation outside `[1e-5, 1e16)`.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn float_json(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or_else(|| Value::from(format_float(v)))
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub command: &'static str,
    pub meta: Vec<(String, Cell)>,
    pub tables: Vec<Table>,
    /// Extra structured payload, JSON only (e.g. a full validation report).
    pub attachments: Vec<(&'static str, Value)>,
    pub passed: bool,
}

impl Document {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            meta: Vec::new(),
            tables: Vec::new(),
            attachments: Vec::new(),
            passed: true,
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Cell>) -> &mut Self {
        self.meta.push((key.to_owned(), value.into()));
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# schema_version={SCHEMA_VERSION}");
        let _ = writeln!(out, "# command={}", self.command);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={}", v.to_csv());
        }
        let _ = writeln!(out, "# passed={}", self.passed);
        for table in &self.tables {
            let _ = writeln!(out, "# table={}", table.name);
            let _ = writeln!(out, "{}", table.columns.join(","));
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::to_csv).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
        }
        out
    }

    fn to_json(&self) -> String {
        let mut root = Map::new();
        root.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
        root.insert("command".into(), Value::from(self.command));
        let mut meta = Map::new();
        for (k, v) in &self.meta {
            meta.insert(k.clone(), v.to_json());
        }
        root.insert("metadata".into(), Value::Object(meta));
        let mut tables = Map::new();
        for table in &self.tables {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let mut obj = Map::new();
                    for (c, cell) in table.columns.iter().zip(row) {
                        obj.insert((*c).to_owned(), cell.to_json());
                    }
                    Value::Object(obj)
                })
                .collect();
            tables.insert(table.name.to_owned(), Value::Array(rows));
        }
        root.insert("tables".into(), Value::Object(tables));
        for (k, v) in &self.attachments {
            root.insert((*k).to_owned(), v.clone());
        }
        root.insert("passed".into(), Value::from(self.passed));
        let mut s = serde_json::to_string_pretty(&Value::Object(root)).expect("serializable");
        s.push('\n');
        s
    }
}
