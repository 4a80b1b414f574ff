//! Run records and their on-disk form.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};

/// Bumped whenever a field of [`RunRecord`] changes.
pub const SCHEMA_TAG: &str = "sgn-run-record/1";

/// A numeric table. Every row has one value per column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(deserialize_with = "nan_rows")]
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match series `{}`", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn is_consistent(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.columns.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// Some sweep points failed; the rest of the run completed.
    Partial,
    /// The run stopped on a numerical failure.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub command: Command,
    pub config: RunConfig,
    pub status: Status,
    pub series: Vec<Series>,
    /// Scalar results. Non-finite values serialize as `null`.
    #[serde(deserialize_with = "nan_map")]
    pub summary: BTreeMap<String, f64>,
    /// Legends for coded columns and other text results.
    pub labels: BTreeMap<String, String>,
    pub diagnostics: Vec<String>,
    /// Files written next to the record, relative to the output directory.
    pub files: Vec<String>,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn new(command: Command, config: &RunConfig) -> Self {
        Self {
            schema: SCHEMA_TAG.into(),
            command,
            config: config.clone(),
            status: Status::Ok,
            series: Vec::new(),
            summary: BTreeMap::new(),
            labels: BTreeMap::new(),
            diagnostics: Vec::new(),
            files: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.summary.insert(key.into(), value);
    }

    /// Writes `record.json` and one CSV per series into `dir`.
    pub fn write(&mut self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for s in &self.series {
            let file = format!("{}.csv", s.name);
            write_csv(&dir.join(&file), s, self)?;
            if !self.files.contains(&file) {
                self.files.push(file);
            }
        }
        self.files.sort();
        let path = dir.join("record.json");
        let text = serde_json::to_string_pretty(self).expect("records serialize");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

// JSON has no NaN; `null` stands for any non-finite value on the way back in.
fn nan_rows<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
    let rows: Vec<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
    Ok(rows.into_iter().map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect())
}

fn nan_map<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
    let map: BTreeMap<String, Option<f64>> = Deserialize::deserialize(d)?;
    Ok(map.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
}

fn write_csv(path: &PathBuf, series: &Series, record: &RunRecord) -> CliResult<()> {
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    // Quantities are nondimensional (gravity scaled to one).
    writeln!(file, "# {} {} series={} units=nondimensional", SCHEMA_TAG, record.command, series.name)
        .map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| CliError::Io { path: path.display().to_string(), source: e.into() };
    w.write_record(&series.columns).map_err(io)?;
    for row in &series.rows {
        w.write_record(row.iter().map(|v| format_value(*v))).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip decimal form; non-finite values become `nan`/`inf`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}
