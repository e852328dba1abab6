//! Report model and its CSV / JSON renderings.
//!
//! Reports never contain timing, so two runs of the same scenario render to
//! identical bytes. Floats are written in their shortest round-trip form.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::Value;

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }
}

/// Shortest representation that parses back to the same double.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            // JSON has no NaN/inf; keep them legible as strings
            Cell::Num(v) if !v.is_finite() => s.serialize_str(&float(*v)),
            Cell::Num(v) => s.serialize_f64(*v),
            Cell::Int(v) => s.serialize_i64(*v),
            Cell::Text(t) => s.serialize_str(t),
            Cell::Bool(b) => s.serialize_bool(*b),
            Cell::Missing => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(name: &str, columns: impl IntoIterator<Item = S>) -> Self {
        Self { name: name.to_string(), columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub summary: BTreeMap<String, Cell>,
    pub tables: Vec<Table>,
}

impl Serialize for Report {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(6))?;
        m.serialize_entry("command", &self.command)?;
        m.serialize_entry("version", self.version)?;
        m.serialize_entry("config_sha256", &self.config_sha256)?;
        m.serialize_entry("seed", &self.seed)?;
        m.serialize_entry("summary", &self.summary)?;
        m.serialize_entry("tables", &self.tables)?;
        m.end()
    }
}

impl Report {
    pub fn new(command: &str, config_sha256: String, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_sha256,
            seed,
            summary: BTreeMap::new(),
            tables: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Cell>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn render(&self, format: Format) -> io::Result<Vec<u8>> {
        let mut out = Vec::new();
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, self).map_err(io::Error::other)?;
                out.push(b'\n');
            }
            Format::Csv => self.write_csv(&mut out)?,
        }
        Ok(out)
    }

    fn write_csv(&self, out: &mut Vec<u8>) -> io::Result<()> {
        writeln!(out, "# command: {}", self.command)?;
        writeln!(out, "# version: {}", self.version)?;
        writeln!(out, "# config_sha256: {}", self.config_sha256)?;
        match self.seed {
            Some(s) => writeln!(out, "# seed: {s}")?,
            None => writeln!(out, "# seed: none")?,
        }
        for (k, v) in &self.summary {
            writeln!(out, "# {k}: {}", v.render())?;
        }
        for table in &self.tables {
            writeln!(out)?;
            writeln!(out, "# table: {}", table.name)?;
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// The report as a JSON value, e.g. for tests.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("reports always serialize")
    }
}
