//! Table rendering. Every real number goes through one formatter so output is
//! byte-identical across runs.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};
use subsampled_rdp::fmt::fixed12;

use crate::config::Format;
use crate::CliError;

#[derive(Debug, Clone)]
pub enum Cell {
    Real(f64),
    Int(u64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Real(x) => fixed12(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Real(x) => real(*x),
            Cell::Int(k) => Value::from(*k),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

/// A finite value rounded to 12 significant digits, or its name when not
/// finite (JSON has no infinities).
pub fn real(x: f64) -> Value {
    if x.is_finite() {
        let rounded: f64 = fixed12(x).parse().expect("formatted float parses");
        Value::from(rounded)
    } else {
        Value::String(fixed12(x))
    }
}

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = self.columns.join(",");
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let records: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let map: Map<String, Value> =
                            self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                        Value::Object(map)
                    })
                    .collect();
                let mut out = serde_json::to_string_pretty(&records).expect("table serializes");
                out.push('\n');
                out
            }
        }
    }
}

/// Writes `text` to `path`, or to standard output.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Usage(format!("cannot write to stdout: {e}"))),
    }
}
