//! CSV schemas and the reader/writer used for every table the harness emits.
//!
//! Floats are written in shortest round-trip form; an absent value is an
//! empty field.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};

/// Per-step training log.
pub const STEPS: &[&str] = &["step", "loss_d", "loss_g", "delta1_first", "delta1_last", "dtheta_norm"];

/// Evaluation snapshots.
pub const METRICS: &[&str] = &[
    "step",
    "gaussian_frechet",
    "mean_error",
    "covariance_error",
    "samples",
    "degenerate",
    "kernel_identity_distance",
];

/// Per-step divergence between runs stepped in lockstep.
pub const DIVERGENCE: &[&str] = &["step", "generator", "discriminator", "max", "within_tolerance"];

/// Sweep aggregate, one row per condition.
pub const SUMMARY: &[&str] = &[
    "condition",
    "label",
    "regime",
    "lambda1",
    "lambda2",
    "n1",
    "n2",
    "delta2",
    "optimizer",
    "seeds",
    "completed",
    "diverged",
    "frechet_mean",
    "frechet_stderr",
    "mean_error_mean",
    "covariance_error_mean",
];

/// Sweep conditions checked against the baseline trajectory.
pub const TRACKING: &[&str] = &["condition", "seed", "steps", "max_divergence", "worst_step", "within_tolerance"];

/// Self-distance of the data distribution at the evaluation sample size.
pub const FLOOR: &[&str] = &["seed", "samples", "gaussian_frechet"];

/// Paired-run verdicts written by `compare`.
pub const COMPARE: &[&str] = &["seed", "steps", "max_divergence", "worst_step", "first_violation", "pass"];

pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

/// Writes rows under a fixed header.
pub struct Sink {
    path: PathBuf,
    width: usize,
    w: csv::Writer<File>,
}

impl Sink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Sink> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        Ok(Sink {
            path: path.to_path_buf(),
            width: header.len(),
            w,
        })
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<()> {
        assert_eq!(fields.len(), self.width, "row width for {}", self.path.display());
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

/// Whole-file CSV contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => HarnessError::io(path, io),
            other => HarnessError::format(path, format!("{other:?}")),
        })?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn text(&self, name: &str) -> Vec<&str> {
        match self.index(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_str()).collect(),
            None => Vec::new(),
        }
    }

    /// A numeric column; empty or unreadable fields become `None`.
    pub fn column(&self, name: &str) -> Vec<Option<f64>> {
        self.text(name).into_iter().map(|s| s.parse().ok()).collect()
    }

    /// `(x, y)` pairs where both fields are present.
    pub fn pairs(&self, x: &str, y: &str) -> Vec<(f64, f64)> {
        self.column(x)
            .into_iter()
            .zip(self.column(y))
            .filter_map(|(a, b)| Some((a?, b?)))
            .collect()
    }
}

/// Mean and standard error of the mean; the error is `None` below two values.
pub fn mean_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}
