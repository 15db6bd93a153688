//! CSV tables with a documented column schema, and the JSON sidecar.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct Column {
    pub name: &'static str,
    pub description: &'static str,
    /// Log base of the quantity, when it is a logarithm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_base: Option<&'static str>,
}

pub const fn col(name: &'static str, description: &'static str) -> Column {
    Column { name, description, log_base: None }
}

pub const fn log_col(name: &'static str, description: &'static str, base: &'static str) -> Column {
    Column { name, description, log_base: Some(base) }
}

/// Cell formatting: shortest round-trip decimal (scientific for tiny or huge
/// magnitudes), empty for missing values.
pub fn f(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

#[derive(Clone, Debug)]
pub struct Table {
    pub suffix: &'static str,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(suffix: &'static str, columns: Vec<Column>) -> Self {
        Self { suffix, columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self, stem: &str) -> String {
        format!("{stem}{}.csv", self.suffix)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        w.write_record(self.columns.iter().map(|c| c.name))?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct FileSchema {
    pub file: String,
    pub columns: Vec<Column>,
}

#[derive(Debug, Serialize)]
pub struct Meta<'a> {
    pub experiment: &'static str,
    pub code_version: &'static str,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
    pub files: Vec<FileSchema>,
    pub summary: serde_json::Value,
}

#[derive(Debug)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: serde_json::Value,
}

pub fn meta_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.meta.json"))
}

/// Writes every table and the sidecar; returns the paths written.
pub fn write_run(cfg: &ExperimentConfig, out: &RunOutput) -> CliResult<Vec<PathBuf>> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let stem = cfg.name();
    let mut written = Vec::new();
    let mut files = Vec::new();
    for t in &out.tables {
        let name = t.file_name(&stem);
        let p = dir.join(&name);
        t.write(&p)?;
        written.push(p);
        files.push(FileSchema { file: name, columns: t.columns.clone() });
    }
    let meta = Meta {
        experiment: cfg.experiment.label(),
        code_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
        files,
        summary: out.summary.clone(),
    };
    let p = meta_path(&dir, &stem);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&p, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17] {
            assert_eq!(f(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(opt(None), "");
    }
}
