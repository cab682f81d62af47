//! Renders the SVG views of the CSVs found under a directory tree.
//!
//! | CSV | plot |
//! |---|---|
//! | `metrics.csv` | `metrics.svg`, metric vs. step |
//! | `steps.csv` | `losses.svg`, losses vs. step |
//! | `samples.csv` | `samples.svg`, generated over real (first two coordinates) |
//! | `divergence.csv` | `divergence.svg`, log10 relative difference vs. step |
//! | `summary.csv` | `sweep.svg`, final Fréchet mean ± stderr per condition |

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::svg::{self, Bar, Series};
use crate::table::Table;

/// What one `emit_plots` call produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotReport {
    pub written: Vec<PathBuf>,
    /// Expected CSVs that were absent or unreadable.
    pub missing: Vec<PathBuf>,
}

impl PlotReport {
    fn merge(&mut self, other: PlotReport) {
        self.written.extend(other.written);
        self.missing.extend(other.missing);
    }
}

fn write(path: PathBuf, body: String, report: &mut PlotReport) -> Result<()> {
    fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
    report.written.push(path);
    Ok(())
}

fn load(dir: &Path, name: &str, report: &mut PlotReport) -> Option<Table> {
    let path = dir.join(name);
    match Table::read(&path) {
        Ok(t) => Some(t),
        Err(_) => {
            report.missing.push(path);
            None
        }
    }
}

fn series(t: &Table, x: &str, ys: &[&str]) -> Vec<Series> {
    ys.iter().map(|y| Series::new(*y, t.pairs(x, y))).collect()
}

/// Plots for one run directory. Missing CSVs are listed; the rest render.
pub fn emit_run(dir: &Path) -> Result<PlotReport> {
    let mut report = PlotReport::default();
    if let Some(t) = load(dir, "metrics.csv", &mut report) {
        let s = series(&t, "step", &["gaussian_frechet", "mean_error", "covariance_error"]);
        write(dir.join("metrics.svg"), svg::line_plot("Sample quality", "step", "value", &s), &mut report)?;
    }
    if let Some(t) = load(dir, "steps.csv", &mut report) {
        let s = series(&t, "step", &["loss_d", "loss_g"]);
        write(dir.join("losses.svg"), svg::line_plot("Training losses", "step", "loss", &s), &mut report)?;
    }
    if let Some(t) = load(dir, "samples.csv", &mut report) {
        let groups = ["real", "generated"]
            .iter()
            .map(|src| {
                let pts = t
                    .rows
                    .iter()
                    .filter(|r| r.first().map(String::as_str) == Some(*src))
                    .filter_map(|r| {
                        let x = r.get(1)?.parse().ok()?;
                        let y = r.get(2).map_or(Some(0.0), |v| v.parse().ok())?;
                        Some((x, y))
                    })
                    .collect();
                (src.to_string(), pts)
            })
            .collect::<Vec<_>>();
        write(dir.join("samples.svg"), svg::scatter_plot("Generated vs. real samples", &groups), &mut report)?;
    }
    Ok(report)
}

fn log10_pairs(t: &Table, y: &str) -> Vec<(f64, f64)> {
    t.pairs("step", y)
        .into_iter()
        .map(|(x, v)| (x, if v > 0.0 { v.log10() } else { -17.0 }))
        .collect()
}

fn emit_divergence(dir: &Path, report: &mut PlotReport) -> Result<()> {
    if let Some(t) = load(dir, "divergence.csv", report) {
        let mut s = vec![
            Series::new("generator", log10_pairs(&t, "generator")),
            Series::new("discriminator", log10_pairs(&t, "discriminator")),
        ];
        let steps: Vec<f64> = t.column("step").into_iter().flatten().collect();
        if let (Some(a), Some(b)) = (steps.first(), steps.last()) {
            let tol = crate::runner::TRACK_TOLERANCE.log10();
            let mut line = Series::new("tolerance", vec![(*a, tol), (*b, tol)]);
            line.dashed = true;
            s.push(line);
        }
        write(
            dir.join("divergence.svg"),
            svg::line_plot("Paired-run parameter divergence", "step", "log10 max relative difference", &s),
            report,
        )?;
    }
    Ok(())
}

/// Reads `axis = …` from a sweep's `plan.txt`.
fn sweep_axis(dir: &Path) -> String {
    fs::read_to_string(dir.join("plan.txt"))
        .ok()
        .and_then(|s| {
            s.lines()
                .find_map(|l| l.strip_prefix("axis = ").map(|v| v.trim().to_string()))
        })
        .unwrap_or_else(|| "condition".into())
}

fn emit_summary(dir: &Path, report: &mut PlotReport) -> Result<()> {
    if let Some(t) = load(dir, "summary.csv", report) {
        let names = t.text("condition");
        let labels = t.text("label");
        let means = t.column("frechet_mean");
        let errs = t.column("frechet_stderr");
        let mut bars = Vec::new();
        let mut baseline = None;
        for i in 0..names.len() {
            let m = means[i].unwrap_or(f64::NAN);
            let e = errs[i].unwrap_or(0.0);
            if names[i] == "baseline" {
                baseline = Some((m, e));
            } else {
                bars.push(Bar {
                    label: labels[i].to_string(),
                    mean: m,
                    stderr: e,
                });
            }
        }
        let body = svg::error_bar_plot(
            "Final Gaussian Fréchet distance (mean ± stderr)",
            &sweep_axis(dir),
            "Gaussian Fréchet distance",
            &bars,
            baseline,
        );
        write(dir.join("sweep.svg"), body, report)?;
    }
    Ok(())
}

/// Renders every plot that can be built under `dir`, recursively. A
/// directory counts as a run when it has `config.txt`; its three CSVs are
/// then expected. An empty tree yields an empty report.
pub fn emit_plots(dir: &Path) -> Result<PlotReport> {
    let meta = fs::metadata(dir).map_err(|e| HarnessError::io(dir, e))?;
    if !meta.is_dir() {
        return Err(HarnessError::format(dir, "not a directory"));
    }
    let mut report = PlotReport::default();
    if dir.join("config.txt").is_file() {
        report.merge(emit_run(dir)?);
    }
    if dir.join("divergence.csv").is_file() {
        emit_divergence(dir, &mut report)?;
    }
    if dir.join("summary.csv").is_file() {
        emit_summary(dir, &mut report)?;
    }
    let mut children: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        report.merge(emit_plots(&c)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_csvs_are_listed_and_others_rendered() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("seed-0");
        fs::create_dir(&run).unwrap();
        fs::write(run.join("config.txt"), "").unwrap();
        fs::write(run.join("metrics.csv"), "step,gaussian_frechet,mean_error,covariance_error\n0,1,2,3\n5,0.5,1,2\n").unwrap();
        let r = emit_plots(dir.path()).unwrap();
        assert_eq!(r.written, vec![run.join("metrics.svg")]);
        assert_eq!(r.missing, vec![run.join("steps.csv"), run.join("samples.csv")]);
    }

    #[test]
    fn empty_tree_produces_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_plots(dir.path()).unwrap(), PlotReport::default());
        assert!(emit_plots(&dir.path().join("absent")).is_err());
    }
}
