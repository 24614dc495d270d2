//! Report rows and deterministic JSON/CSV writers.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Pass,
    Fail,
    /// A dependent check whose hypothesis failed.
    NotImplied,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub paper_anchor: String,
    pub residual: f64,
    pub threshold: f64,
    pub pass: bool,
    pub status: RowStatus,
}

impl CheckRow {
    /// Passes when `residual <= threshold` (NaN never passes).
    pub fn new(name: impl Into<String>, anchor: &str, residual: f64, threshold: f64) -> Self {
        let pass = residual <= threshold;
        CheckRow {
            name: name.into(),
            paper_anchor: anchor.into(),
            residual,
            threshold,
            pass,
            status: if pass { RowStatus::Pass } else { RowStatus::Fail },
        }
    }

    pub fn gated(mut self, hypothesis_holds: bool) -> Self {
        if !hypothesis_holds {
            self.pass = false;
            self.status = RowStatus::NotImplied;
        }
        self
    }

    pub fn failed(&self) -> bool {
        self.status == RowStatus::Fail
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub seed: u64,
    pub pass: bool,
    pub failing: Vec<&'a str>,
    pub errors: &'a [String],
    pub checks: &'a [CheckRow],
}

/// Integers print plainly, everything else in shortest round-trip
/// exponent form.
fn number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// A report directory with the enabled formats.
#[derive(Clone, Debug)]
pub struct Output {
    pub dir: PathBuf,
    pub json: bool,
    pub csv: bool,
}

fn io(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Io(format!("{}: {e}", path.display()))
}

impl Output {
    pub fn sub(&self, name: &str) -> Output {
        Output {
            dir: self.dir.join(name),
            ..self.clone()
        }
    }

    fn prepare(&self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        Ok(path)
    }

    /// Pretty JSON; always written regardless of `json`.
    pub fn force_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.prepare(name)?;
        let mut text = serde_json::to_string_pretty(value).map_err(|e| io(&path, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io(&path, e))
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        if self.json {
            self.force_json(name, value)?;
        }
        Ok(())
    }

    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let path = self.prepare(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
        w.write_record(header).map_err(|e| io(&path, e))?;
        for r in rows {
            w.write_record(r.iter().map(|x| number(*x))).map_err(|e| io(&path, e))?;
        }
        w.flush().map_err(|e| io(&path, e))
    }
}
