use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};

pub const SCHEMA_VERSION: u32 = 1;

/// One acceptance check with the measured value and its threshold.
#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            detail: format!("{value:.6e} <= {limit:e}"),
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= limit,
            detail: format!("{value:.6e} >= {limit:e}"),
        }
    }

    pub fn holds(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A sweep or trace table written as CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self {
            name: name.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let enc = |e: csv::Error| RunError::Encode(e.to_string());
        w.write_record(&self.headers).map_err(enc)?;
        for r in &self.rows {
            w.write_record(r).map_err(enc)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Encode(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| RunError::Encode(e.to_string()))
    }
}

/// Shortest round-trip text of a float; the same value always prints the same.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// What an experiment produces before it is wrapped into a report.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Value,
    pub criteria: Vec<Criterion>,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub experiment: String,
    pub inputs: ExperimentConfig,
    pub thresholds: BTreeMap<String, f64>,
    pub results: Value,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
    pub tables: Vec<String>,
    pub wall_clock_seconds: f64,
    pub library_version: &'static str,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| RunError::Encode(e.to_string()))
    }
}

/// CSV paths next to the JSON report: `<stem>.csv` for a single table,
/// `<stem>-<table>.csv` otherwise.
pub fn table_paths(out: &Path, tables: &[Table]) -> Vec<PathBuf> {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    tables
        .iter()
        .map(|t| {
            let file = if tables.len() == 1 {
                format!("{stem}.csv")
            } else {
                format!("{stem}-{}.csv", t.name)
            };
            out.with_file_name(file)
        })
        .collect()
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Write {
            path: path.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}
