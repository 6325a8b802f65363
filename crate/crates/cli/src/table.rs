//! Flat output tables with a fixed header per command.

use std::io::Write;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use spatial_extremes::VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Real(f64),
    Int(i64),
    Count(u64),
    Flag(bool),
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Count(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Flag(x)
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Real(x) => x.to_string(),
            Cell::Int(x) => x.to_string(),
            Cell::Count(x) => x.to_string(),
            Cell::Flag(x) => x.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            // non-finite reals become null
            Cell::Real(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
            Cell::Int(x) => Value::from(*x),
            Cell::Count(x) => Value::from(*x),
            Cell::Flag(x) => Value::Bool(*x),
        }
    }
}

/// Rows under a fixed header. Every row is closed by the provenance columns
/// `seed`, `model_digest` and `version`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
    seed: u64,
}

impl Table {
    pub fn new(columns: &[&str], seed: u64) -> Self {
        let mut header: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        header.extend(["seed", "model_digest", "version"].map(String::from));
        Table {
            header,
            rows: Vec::new(),
            seed,
        }
    }

    /// Like [`Table::new`] with owned column names.
    pub fn with_columns(columns: Vec<String>, seed: u64) -> Self {
        let refs: Vec<&str> = columns.iter().map(|s| s.as_str()).collect();
        Table::new(&refs, seed)
    }

    pub fn push(&mut self, mut cells: Vec<Cell>, model_digest: &str) {
        assert_eq!(cells.len() + 3, self.header.len(), "row width does not match header");
        cells.push(Cell::Count(self.seed));
        cells.push(Cell::Text(model_digest.to_string()));
        cells.push(Cell::Text(VERSION.to_string()));
        self.rows.push(cells);
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn write<W: Write>(&self, format: Format, out: W) -> Result<()> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.header)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::text))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let records: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let m: Map<String, Value> =
                            self.header.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                        Value::Object(m)
                    })
                    .collect();
                let mut out = out;
                serde_json::to_writer_pretty(&mut out, &records)?;
                writeln!(out)?;
            }
        }
        Ok(())
    }
}
