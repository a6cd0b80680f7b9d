//! Tables, artifact files and schema validation.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Int,
    Float,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: &'static str,
    pub kind: Kind,
}

pub const fn int(name: &'static str) -> Column {
    Column { name, kind: Kind::Int }
}

pub const fn float(name: &'static str) -> Column {
    Column { name, kind: Kind::Float }
}

pub const fn text(name: &'static str) -> Column {
    Column { name, kind: Kind::Text }
}

/// Shortest round-trip scientific notation; stable across runs.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:e}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[Column]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Float column as numbers, by name.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.columns.iter().position(|c| c.name == name) else {
            return Vec::new();
        };
        self.rows.iter().map(|r| r[i].parse::<f64>().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name))?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner()?)
    }
}

/// Checks header and cell types of a CSV against `schema`.
pub fn check_schema(bytes: &[u8], schema: &[Column]) -> Result<usize> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let names: Vec<&str> = schema.iter().map(|c| c.name).collect();
    if header != names {
        bail!("header {header:?} does not match {names:?}");
    }
    let mut n = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != schema.len() {
            bail!("row {} has {} fields, expected {}", i + 1, rec.len(), schema.len());
        }
        for (cell, col) in rec.iter().zip(schema) {
            let ok = match col.kind {
                Kind::Int => cell.parse::<i64>().is_ok(),
                Kind::Float => cell.parse::<f64>().is_ok() || matches!(cell, "NaN" | "inf" | "-inf"),
                Kind::Text => !cell.is_empty(),
            };
            if !ok {
                bail!("row {}: column '{}' has bad value '{cell}'", i + 1, col.name);
            }
        }
        n += 1;
    }
    Ok(n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutput {
    pub results: Table,
    pub summary: Vec<(String, String)>,
    pub series: Vec<(String, Table)>,
    /// Violated invariants; any entry makes the run fail.
    pub failures: Vec<String>,
}

impl SuiteOutput {
    pub fn new(results: Table) -> Self {
        Self { results, summary: Vec::new(), series: Vec::new(), failures: Vec::new() }
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn note_f64(&mut self, key: impl Into<String>, value: f64) {
        self.summary.push((key.into(), fmt_f64(value)));
    }

    pub fn fail(&mut self, msg: impl Into<String>) {
        self.failures.push(msg.into());
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary_text(&self, config: &str) -> String {
        let mut s = String::new();
        s.push_str("# config\n");
        s.push_str(config);
        s.push_str("# summary\n");
        for (k, v) in &self.summary {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push_str(&format!("status={}\n", if self.passed() { "pass" } else { "fail" }));
        for f in &self.failures {
            s.push_str(&format!("failure={f}\n"));
        }
        s
    }

    /// Writes `results.csv`, `summary.txt` and one CSV per series.
    pub fn write(&self, dir: &Path, config: &str) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let csv = self.results.to_csv()?;
        check_schema(&csv, &self.results.columns)?;
        fs::write(dir.join("results.csv"), csv)?;
        fs::write(dir.join("summary.txt"), self.summary_text(config))?;
        for (name, t) in &self.series {
            let bytes = t.to_csv()?;
            check_schema(&bytes, &t.columns)?;
            fs::write(dir.join(format!("{name}.csv")), bytes)?;
        }
        Ok(())
    }
}
