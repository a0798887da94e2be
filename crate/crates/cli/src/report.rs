//! Checks, JSON reports and CSV tables.
//!
//! Every CSV file starts with a `schema_version` column; the remaining columns are fixed per
//! subcommand (see the README). Floats are written in Rust's shortest round-trip form, and
//! reports carry no timings, so identical inputs give byte-identical files.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// A numeric claim with the tolerance it is held to and the oracle it is compared with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    /// Relative tolerance for `rel`, unused (0) otherwise.
    pub tolerance: f64,
    /// How value and target are compared: rel, le, ge or holds.
    pub relation: &'static str,
    pub oracle: String,
    pub pass: bool,
}

impl Check {
    /// |value - target| <= tol |target|.
    pub fn rel(name: impl Into<String>, value: f64, target: f64, tol: f64, oracle: impl Into<String>) -> Self {
        let pass = (value - target).abs() <= tol * target.abs();
        Check { name: name.into(), value, target, tolerance: tol, relation: "rel", oracle: oracle.into(), pass }
    }

    /// value <= bound.
    pub fn le(name: impl Into<String>, value: f64, bound: f64, oracle: impl Into<String>) -> Self {
        Check { name: name.into(), value, target: bound, tolerance: 0.0, relation: "le", oracle: oracle.into(), pass: value <= bound }
    }

    /// value >= bound.
    pub fn ge(name: impl Into<String>, value: f64, bound: f64, oracle: impl Into<String>) -> Self {
        Check { name: name.into(), value, target: bound, tolerance: 0.0, relation: "ge", oracle: oracle.into(), pass: value >= bound }
    }

    /// A yes/no property; value is 1 when it holds.
    pub fn holds(name: impl Into<String>, ok: bool, oracle: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            target: 1.0,
            tolerance: 0.0,
            relation: "holds",
            oracle: oracle.into(),
            pass: ok,
        }
    }
}

/// Rows of one CSV file; values are already formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["schema_version"];
        header.extend(self.columns.iter().copied());
        w.write_record(&header)?;
        let v = SCHEMA_VERSION.to_string();
        for row in &self.rows {
            w.write_record(std::iter::once(v.as_str()).chain(row.iter().map(String::as_str)))?;
        }
        w.flush()
    }
}

/// Formats a float for CSV: shortest round-trip form, `nan`, `inf`, `-inf`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub subcommand: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    pub config: ExperimentConfig,
}

/// Writes `report.json` and `<subcommand>.csv` into the output directory.
pub fn write_outputs(dir: &Path, report: &Report, table: &Table) -> std::io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let json = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(&json, text)?;
    let csv = dir.join(format!("{}.csv", report.subcommand));
    table.write(&csv)?;
    Ok((json, csv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_relations() {
        assert!(Check::rel("a", 1.02, 1.0, 0.03, "o").pass);
        assert!(!Check::rel("a", 1.04, 1.0, 0.03, "o").pass);
        assert!(Check::le("b", 1.0, 1.0, "o").pass);
        assert!(!Check::le("b", f64::NAN, 1.0, "o").pass);
        assert!(!Check::ge("c", 0.5, 0.9, "o").pass);
        assert_eq!(Check::holds("d", false, "o").value, 0.0);
    }

    #[test]
    fn csv_starts_with_schema_version() {
        let dir = std::env::temp_dir().join(format!("pplab-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut t = Table::new(&["x", "y"]);
        t.push(vec![num(0.1), num(f64::NEG_INFINITY)]);
        let p = dir.join("t.csv");
        t.write(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "schema_version,x,y\n1,0.1,-inf\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
