//! Tables, JSON documents and text files written by the stages.
//!
//! Every table ends with `_stage` and `_config_hash` columns and every JSON
//! document carries `stage` and `config_hash` keys. Floats are written in
//! their shortest round-trip form, so reading a table back gives the same
//! bits.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{PipelineError, Result};

pub const STAGE_COLUMN: &str = "_stage";
pub const HASH_COLUMN: &str = "_config_hash";

/// Shortest representation that parses back to the same `f64`; empty for NaN.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x != 0.0 && x.is_finite() && (x.abs() < 1e-5 || x.abs() >= 1e16) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn parse_f64(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        Some(f64::NAN)
    } else {
        cell.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cells of column `name`, or an error naming the file.
    pub fn cells<'a>(&'a self, name: &str, origin: &Path) -> Result<impl Iterator<Item = &'a str> + 'a> {
        let j = self.column(name).ok_or_else(|| PipelineError::Parse {
            path: origin.to_path_buf(),
            line: 1,
            column: name.to_string(),
            message: "column missing".into(),
        })?;
        Ok(self.rows.iter().map(move |r| r[j].as_str()))
    }

    pub fn to_csv(&self, stage: &str, hash: &str) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let provenance = [STAGE_COLUMN, HASH_COLUMN];
        w.write_record(self.header.iter().map(String::as_str).chain(provenance)).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(String::as_str).chain([stage, hash])).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| csv_error(path, e))?.iter().map(String::from).collect());
        }
        Ok(Table { header, rows })
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> PipelineError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => PipelineError::io(path, source),
        kind => PipelineError::Parse {
            path: path.to_path_buf(),
            line,
            column: String::new(),
            message: format!("{kind:?}"),
        },
    }
}

/// Writes the files of one stage under `root` and remembers what it wrote.
pub struct StageWriter {
    root: PathBuf,
    stage: &'static str,
    hash: String,
    written: Vec<String>,
}

impl StageWriter {
    pub fn new(root: &Path, stage: &'static str, hash: &str) -> Self {
        StageWriter { root: root.to_path_buf(), stage, hash: hash.to_string(), written: Vec::new() }
    }

    pub fn stage(&self) -> &'static str {
        self.stage
    }

    pub fn table(&mut self, rel: &str, table: &Table) -> Result<()> {
        let bytes = table.to_csv(self.stage, &self.hash);
        self.bytes(rel, &bytes)
    }

    /// Writes `value` pretty-printed; objects get the provenance keys.
    pub fn json(&mut self, rel: &str, mut value: Value) -> Result<()> {
        if let Value::Object(map) = &mut value {
            let mut stamped = Map::new();
            stamped.insert("stage".into(), Value::from(self.stage));
            stamped.insert("config_hash".into(), Value::from(self.hash.as_str()));
            stamped.append(map);
            value = Value::Object(stamped);
        }
        let mut text = serde_json::to_string_pretty(&value).expect("json values serialize");
        text.push('\n');
        self.bytes(rel, text.as_bytes())
    }

    pub fn text(&mut self, rel: &str, text: &str) -> Result<()> {
        self.bytes(rel, text.as_bytes())
    }

    fn bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        self.written.push(rel.to_string());
        Ok(())
    }

    pub fn into_written(self) -> Vec<String> {
        self.written
    }
}

/// Finite floats as numbers, NaN and infinities as `null`.
pub fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn json_vec(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(json_f64).collect())
}

pub fn json_matrix(m: &nalgebra::DMatrix<f64>) -> Value {
    Value::Array(m.row_iter().map(|r| json_vec(r.iter().copied())).collect())
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn provenance_columns_are_appended() {
        let mut t = Table::new(["date", "x"]);
        t.push(vec!["2001-01-02".into(), fmt_f64(0.5)]);
        let csv = String::from_utf8(t.to_csv("curve", "abc")).unwrap();
        assert_eq!(csv, "date,x,_stage,_config_hash\n2001-01-02,0.5,curve,abc\n");
    }

    #[test]
    fn special_values() {
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(1e-12), "1e-12");
        assert_eq!(fmt_f64(-2.5), "-2.5");
        assert!(parse_f64("").unwrap().is_nan());
        assert_eq!(parse_f64(" 3.25 "), Some(3.25));
        assert_eq!(parse_f64("x"), None);
    }

    #[test]
    fn json_is_stamped() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = StageWriter::new(dir.path(), "topics", "h");
        w.json("a/b.json", serde_json::json!({"k": 3})).unwrap();
        let v = read_json(&dir.path().join("a/b.json")).unwrap();
        assert_eq!(v["stage"], "topics");
        assert_eq!(v["config_hash"], "h");
        assert_eq!(v["k"], 3);
        assert_eq!(w.into_written(), vec!["a/b.json".to_string()]);
    }

    proptest! {
        #[test]
        fn floats_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse_f64(&fmt_f64(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
