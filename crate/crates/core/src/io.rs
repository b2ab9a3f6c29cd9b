//! File formats: headerless feature CSV, label files, problem manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureMatrix, Labels, SolverConfig};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Fixed 12-significant-digit rendering used by every writer.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, format!("row {}: bad value '{cell}'", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_matrix_csv(&text, path)
}

/// Loads one view; rows are dimensions, columns are data points.
pub fn load_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::new(read_matrix_csv(path)?, 1)
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let line: Vec<String> = m.row(r).iter().map(|&v| format_value(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(io_err(path))
}

pub fn read_labels(path: &Path) -> Result<Labels> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let values = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(path, format!("line {}: bad label '{}'", i + 1, l.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Labels::from_values(values))
}

pub fn write_labels(path: &Path, labels: &Labels) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    let mut text = String::with_capacity(labels.len() * 2);
    for v in labels.values() {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// `{"features": [paths], "num_clusters": M, "config": {overrides}}`.
/// Relative feature paths resolve against the manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub features: Vec<PathBuf>,
    pub num_clusters: usize,
    #[serde(default)]
    pub config: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub features: Vec<FeatureMatrix>,
    pub config: SolverConfig,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
    }

    /// Defaults, then the manifest's overrides, then `num_clusters`.
    pub fn config(&self, path: &Path) -> Result<SolverConfig> {
        let mut config: SolverConfig =
            serde_json::from_value(serde_json::Value::Object(self.config.clone()))
                .map_err(|e| parse_err(path, format!("config: {e}")))?;
        config.num_clusters = self.num_clusters;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Problem> {
        let manifest = Self::read(path)?;
        let config = manifest.config(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let features = manifest
            .features
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let full = if p.is_absolute() {
                    p.clone()
                } else {
                    base.join(p)
                };
                FeatureMatrix::new(read_matrix_csv(&full)?, k + 1)
            })
            .collect::<Result<Vec<_>>>()?;
        if features.is_empty() {
            return Err(parse_err(path, "manifest lists no features"));
        }
        Ok(Problem { features, config })
    }
}
