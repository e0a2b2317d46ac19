//! Long-form tables and the run manifest.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::Format;
use crate::error::CliError;

/// One table: named columns, one value per row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_value(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.clone(), if v.is_finite() { json!(v) } else { Value::Null }))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("plain values serialize");
        s.push('\n');
        s
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

/// Collects output files and writes the manifest last.
pub struct Output {
    pub dir: PathBuf,
    pub format: Format,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Output {
    pub fn new(dir: PathBuf, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(&dir)?;
        Ok(Output { dir, format, files: Vec::new() })
    }

    pub fn table(&mut self, stem: &str, table: &Table) -> Result<(), CliError> {
        let (body, ext) = match self.format {
            Format::Csv => (table.to_csv(), "csv"),
            Format::Json => (table.to_json(), "json"),
        };
        self.raw(&format!("{stem}.{ext}"), body.as_bytes(), table.len())
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8], rows: usize) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(FileEntry { name: name.to_string(), rows, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn manifest(&self, mut extra: Map<String, Value>) -> Result<(), CliError> {
        extra.insert("tool".into(), json!("pdmp"));
        extra.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        extra.insert("files".into(), serde_json::to_value(&self.files).expect("entries serialize"));
        let text = serde_json::to_string_pretty(&Value::Object(extra)).expect("manifest serializes");
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(vec!["x", "mode", "value"]);
        t.push(vec![0.25, 1.0, f64::INFINITY]);
        t.push(vec![0.5, 0.0, 0.125]);
        assert_eq!(t.to_csv(), "x,mode,value\n0.25,1,inf\n0.5,0,0.125\n");
        let v: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v[0]["value"], Value::Null);
        assert_eq!(v[1]["value"], json!(0.125));
    }
}
