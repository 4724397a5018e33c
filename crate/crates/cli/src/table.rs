//! Column tables and their CSV / JSON encodings.
//!
//! CSV files start with `# key: value` metadata lines, followed by a header
//! row and one line per record. Floats are written with 9 significant digits
//! so reruns diff cleanly.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn kind(&self) -> Kind {
        match self {
            Cell::Int(_) => Kind::Int,
            Cell::Float(_) => Kind::Float,
            Cell::Bool(_) => Kind::Bool,
            Cell::Text(_) => Kind::Text,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_sig9(*v),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(serde_json::Value::Null, Into::into),
            Cell::Bool(v) => (*v).into(),
            Cell::Text(v) => v.clone().into(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(i64::from(v))
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
        Cell::Text(v.to_string())
    }
}

/// `%.9g`-style rendering: fixed notation for exponents in `[-5, 9)`,
/// scientific otherwise, trailing zeros dropped.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub subcommand: String,
    pub config_sha256: String,
    /// Canonical JSON of the resolved configuration.
    pub config: String,
}

impl Metadata {
    fn entries(&self) -> [(&'static str, &str); 4] {
        [
            ("tool", &self.tool),
            ("subcommand", &self.subcommand),
            ("config_sha256", &self.config_sha256),
            ("config", &self.config),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    columns: Vec<(String, Kind)>,
    rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[(&str, Kind)]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|(n, k)| (n.to_string(), *k)).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        for (cell, (name, kind)) in row.iter().zip(&self.columns) {
            assert_eq!(cell.kind(), *kind, "column {name} of table {}", self.name);
        }
        self.rows.push(row);
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, Kind)> {
        self.columns.iter().map(|(n, k)| (n.as_str(), *k))
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let idx = self.columns.iter().position(|(n, _)| n == name)?;
        Some(self.rows.iter().map(|r| &r[idx]).collect())
    }

    pub fn to_csv(&self, meta: &Metadata) -> CliResult<String> {
        let mut out = String::new();
        for (k, v) in meta.entries() {
            writeln!(out, "# {k}: {v}").expect("write to string");
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let header: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        let csv_err = |e: csv::Error| CliError::Output(format!("csv encoding of {}: {e}", self.name));
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Output(format!("csv encoding of {}: {e}", self.name)))?;
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn to_json(&self, meta: &Metadata) -> String {
        let doc = serde_json::json!({
            "metadata": meta,
            "table": self.name,
            "columns": self.columns.iter().map(|(n, k)| serde_json::json!({"name": n, "kind": k})).collect::<Vec<_>>(),
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json encoding");
        s.push('\n');
        s
    }

    /// Parses a CSV produced by [`ResultTable::to_csv`]. Column kinds are
    /// inferred: integers, then floats, then booleans, then text.
    pub fn from_csv(name: &str, text: &str) -> CliResult<(Metadata, Self)> {
        let mut meta = std::collections::HashMap::new();
        let mut body_start = 0;
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("# ") else { break };
            let (k, v) = rest
                .split_once(": ")
                .ok_or_else(|| CliError::Output(format!("malformed metadata line `{line}`")))?;
            meta.insert(k.to_string(), v.to_string());
            body_start += line.len() + 1;
        }
        let take = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| CliError::Output(format!("{name}: missing metadata `{k}`")))
        };
        let metadata = Metadata {
            tool: take("tool")?,
            subcommand: take("subcommand")?,
            config_sha256: take("config_sha256")?,
            config: take("config")?,
        };

        let csv_err = |e: csv::Error| CliError::Output(format!("{name}: {e}"));
        let mut r = csv::Reader::from_reader(&text.as_bytes()[body_start..]);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let raw: Vec<Vec<String>> = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(csv_err)?;

        let kinds: Vec<Kind> = (0..header.len())
            .map(|j| {
                let col = || raw.iter().map(|row| row[j].as_str());
                if col().all(|s| s.parse::<i64>().is_ok()) {
                    Kind::Int
                } else if col().all(|s| s.parse::<f64>().is_ok()) {
                    Kind::Float
                } else if col().all(|s| s == "true" || s == "false") {
                    Kind::Bool
                } else {
                    Kind::Text
                }
            })
            .collect();
        let columns: Vec<(String, Kind)> = header.into_iter().zip(kinds.iter().copied()).collect();
        let rows = raw
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .zip(&kinds)
                    .map(|(s, k)| match k {
                        Kind::Int => Cell::Int(s.parse().unwrap()),
                        Kind::Float => Cell::Float(s.parse().unwrap()),
                        Kind::Bool => Cell::Bool(s == "true"),
                        Kind::Text => Cell::Text(s),
                    })
                    .collect()
            })
            .collect();
        Ok((
            metadata,
            Self {
                name: name.to_string(),
                columns,
                rows,
            },
        ))
    }
}
