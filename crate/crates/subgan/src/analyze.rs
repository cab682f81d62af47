//! File-producing wrappers around the core diagnostics.
//!
//! * kernel: `kernel.csv` (one row per noise draw), `eigenvalues.csv`,
//!   `kernel.svg` (heatmap of the first kernel), `kernel_summary.txt`.
//! * taylor: `taylor.csv` with the residual of the first-order prediction
//!   per step size and the empirical order between neighbours, `taylor.svg`.
//! * toy: `toy.csv` per seed, `toy.svg` scatter of target vs. generated.
//! * floor: `floor.csv`, self-distance of the data at several sample sizes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use subgan_core::analysis::{compute_kernel, taylor_check, toy_experiment, ToySchedule};
use subgan_core::data::{sample, DistributionSpec};
use subgan_core::linalg::frobenius;
use subgan_core::metrics::gaussian_frechet;
use subgan_core::trainer::{Regime, SubproblemConfig};
use subgan_core::{Activation, Discrepancy, Model, Tensor, ToyGenerator};

use crate::error::{HarnessError, Result};
use crate::svg::{self, Series};
use crate::table::{mean_stderr, num, opt, Sink};

fn mkdir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))
}

fn save(path: &Path, body: String) -> Result<()> {
    fs::write(path, body).map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSummary {
    pub samples: usize,
    pub trace_over_d_mean: f64,
    pub trace_over_d_stderr: f64,
    /// `d + 1` for the toy generator under standard normal noise.
    pub expected: Option<f64>,
    /// Largest `‖K − ‖z̃‖² I‖_max` seen, toy generator only.
    pub max_closed_form_deviation: Option<f64>,
    pub min_eigenvalue: f64,
}

/// Kernels of `g` at `samples` standard normal noise draws.
pub fn kernel(out: &Path, g: &Model, samples: usize, seed: u64) -> Result<KernelSummary> {
    mkdir(out)?;
    let toy = ToyGenerator::from_model(g).is_ok();
    let n = g.input_dim();
    let d = g.output_dim();
    let z = sample(&DistributionSpec::standard_normal(n), samples.max(1), seed)?;
    let mut rows = Sink::create(
        &out.join("kernel.csv"),
        &["index", "z_norm_sq", "trace", "trace_over_d", "min_eigenvalue", "max_eigenvalue", "identity_distance", "closed_form_deviation"],
    )?;
    let mut eig = Sink::create(&out.join("eigenvalues.csv"), &["index", "k", "eigenvalue"])?;
    let mut ratios = Vec::with_capacity(samples);
    let mut worst_dev: Option<f64> = None;
    let mut min_eig = f64::INFINITY;
    let mut first = None;
    for (i, zi) in z.rows().enumerate() {
        let k = compute_kernel(g, &Tensor::row(zi))?;
        let norm_sq: f64 = zi.iter().map(|v| v * v).sum();
        let ev = k.eigenvalues();
        let dev = toy.then(|| k.max_deviation_from_scaled_identity(norm_sq + 1.0));
        if let Some(v) = dev {
            worst_dev = Some(worst_dev.map_or(v, |w: f64| w.max(v)));
        }
        let lo = ev.first().copied().unwrap_or(0.0);
        let hi = ev.last().copied().unwrap_or(0.0);
        min_eig = min_eig.min(lo);
        ratios.push(k.trace() / d as f64);
        rows.row(&[
            i.to_string(),
            num(norm_sq),
            num(k.trace()),
            num(k.trace() / d as f64),
            num(lo),
            num(hi),
            num(k.identity_distance()),
            opt(dev),
        ])?;
        for (j, e) in ev.iter().enumerate() {
            eig.row(&[i.to_string(), j.to_string(), num(*e)])?;
        }
        if first.is_none() {
            first = Some(k);
        }
    }
    rows.finish()?;
    eig.finish()?;
    let (m, s) = mean_stderr(&ratios);
    let summary = KernelSummary {
        samples: ratios.len(),
        trace_over_d_mean: m.unwrap_or(f64::NAN),
        trace_over_d_stderr: s.unwrap_or(f64::NAN),
        expected: toy.then(|| d as f64 + 1.0),
        max_closed_form_deviation: worst_dev,
        min_eigenvalue: min_eig,
    };
    if let Some(k) = first {
        save(&out.join("kernel.svg"), svg::heatmap("Inductive-bias kernel K at the first draw", k.dim, &k.data))?;
    }
    let mut text = format!(
        "generator = {}\nsamples = {}\ntrace_over_d_mean = {}\ntrace_over_d_stderr = {}\nmin_eigenvalue = {}\n",
        g.descriptor(),
        summary.samples,
        summary.trace_over_d_mean,
        summary.trace_over_d_stderr,
        summary.min_eigenvalue
    );
    if let Some(e) = summary.expected {
        let _ = writeln!(text, "expected_trace_over_d = {e}");
    }
    if let Some(v) = summary.max_closed_form_deviation {
        let _ = writeln!(text, "max_closed_form_deviation = {v}");
    }
    save(&out.join("kernel_summary.txt"), text)?;
    Ok(summary)
}

/// Step sizes `eta0 / 2^k`, `k = 0..count`.
pub fn halving(eta0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| eta0 / f64::powi(2.0, k as i32)).collect()
}

/// Empirical order `log(r_a / r_b) / log(η_a / η_b)` between neighbours.
pub fn orders(etas: &[f64], residuals: &[f64]) -> Vec<f64> {
    etas.windows(2)
        .zip(residuals.windows(2))
        .map(|(e, r)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorRow {
    pub model: String,
    pub eta: f64,
    pub residual: f64,
    pub order: Option<f64>,
}

/// Taylor residuals for a seeded tanh MLP generator and the linear toy
/// generator, each against a seeded tanh MLP discriminator.
pub fn taylor(out: &Path, hidden: &[usize], dim: usize, etas: &[f64], seed: u64) -> Result<Vec<TaylorRow>> {
    mkdir(out)?;
    let mut gdims = vec![dim];
    gdims.extend(hidden);
    gdims.push(dim);
    let mut fdims = vec![dim];
    fdims.extend(hidden);
    fdims.push(1);
    let mlp = Model::mlp(&gdims, Activation::Tanh)?.with_init(seed);
    let f = Model::mlp(&fdims, Activation::Tanh)?.with_init(seed ^ 1);
    let mut b = ToyGenerator::identity(dim).b().to_vec();
    let zb = sample(&DistributionSpec::standard_normal(b.len()), 1, seed ^ 2)?;
    for (v, e) in b.iter_mut().zip(zb.data()) {
        *v += 0.3 * e;
    }
    let toy = ToyGenerator::new(dim, b)?.to_model();
    let z = sample(&DistributionSpec::standard_normal(dim), 1, seed ^ 3)?;

    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (name, g) in [("tanh-mlp", &mlp), ("toy", &toy)] {
        let res = etas
            .iter()
            .map(|&e| Ok(taylor_check(g, &f, &z, e, Discrepancy::Bce)?.residual_norm))
            .collect::<Result<Vec<f64>>>()?;
        let ords = orders(etas, &res);
        for (i, (&e, &r)) in etas.iter().zip(&res).enumerate() {
            rows.push(TaylorRow {
                model: name.into(),
                eta: e,
                residual: r,
                order: i.checked_sub(1).map(|j| ords[j]),
            });
        }
        let pts = etas
            .iter()
            .zip(&res)
            .filter(|(_, r)| **r > 0.0)
            .map(|(e, r)| (e.log10(), r.log10()))
            .collect();
        series.push(Series::new(name, pts));
    }
    let mut s = Sink::create(&out.join("taylor.csv"), &["model", "eta_g", "residual_norm", "order"])?;
    for r in &rows {
        s.row(&[r.model.clone(), num(r.eta), num(r.residual), opt(r.order)])?;
    }
    s.finish()?;
    save(
        &out.join("taylor.svg"),
        svg::line_plot("First-order prediction residual", "log10 eta_g", "log10 residual", &series),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRow {
    pub seed: u64,
    pub steps_completed: usize,
    pub mean_error: f64,
    pub covariance_error: f64,
    pub alignment: Option<f64>,
}

/// The linear/logistic GAN on `N(mu, sigma)` for each seed. The threshold
/// column is `0.25·‖Σ − I‖_F`.
pub fn toy(out: &Path, mu: &[f64], sigma: &[f64], cfg: &SubproblemConfig, steps: usize, batch: usize, seeds: &[u64]) -> Result<Vec<ToyRow>> {
    mkdir(out)?;
    let d = mu.len();
    let mut gap = sigma.to_vec();
    for i in 0..d {
        gap[i * d + i] -= 1.0;
    }
    let threshold = 0.25 * frobenius(&gap);
    let mut s = Sink::create(
        &out.join("toy.csv"),
        &["seed", "steps_completed", "mean_error", "covariance_error", "covariance_threshold", "alignment", "alpha", "beta"],
    )?;
    let mut rows = Vec::new();
    let mut scatter = None;
    for &seed in seeds {
        let r = toy_experiment(
            mu,
            sigma,
            cfg,
            ToySchedule {
                steps,
                batch_size: batch,
                seed,
                regime: Regime::Subproblem,
            },
        )?;
        s.row(&[
            seed.to_string(),
            r.steps_completed.to_string(),
            num(r.mean_error),
            num(r.covariance_error),
            num(threshold),
            opt(r.alignment.alignment),
            num(r.alignment.alpha),
            num(r.alignment.beta),
        ])?;
        if scatter.is_none() && d >= 2 {
            let spec = DistributionSpec::gaussian(mu.to_vec(), sigma.to_vec())?;
            let real = sample(&spec, 1000, seed)?;
            let z = sample(&DistributionSpec::standard_normal(d), 1000, seed ^ 1)?;
            let fake = r.generator.to_model().predict(&z)?;
            let pts = |t: &Tensor| t.rows().map(|r| (r[0], r[1])).collect::<Vec<_>>();
            scatter = Some(vec![("target".to_string(), pts(&real)), ("generated".to_string(), pts(&fake))]);
        }
        rows.push(ToyRow {
            seed,
            steps_completed: r.steps_completed,
            mean_error: r.mean_error,
            covariance_error: r.covariance_error,
            alignment: r.alignment.alignment,
        });
    }
    s.finish()?;
    if let Some(groups) = scatter {
        save(&out.join("toy.svg"), svg::scatter_plot("Linear generator after training", &groups))?;
    }
    Ok(rows)
}

/// Gaussian Fréchet distance between two independent samples of `spec`,
/// per sample size: mean and standard error over `seeds`.
pub fn floor(out: &Path, spec: &DistributionSpec, sizes: &[usize], seeds: &[u64]) -> Result<Vec<(usize, f64, Option<f64>)>> {
    mkdir(out)?;
    let mut s = Sink::create(&out.join("floor.csv"), &["samples", "repeats", "frechet_mean", "frechet_stderr"])?;
    let mut rows = Vec::new();
    for &n in sizes {
        let mut v = Vec::new();
        for &seed in seeds {
            let a = sample(spec, n, seed.wrapping_mul(2))?;
            let b = sample(spec, n, seed.wrapping_mul(2) + 1)?;
            v.push(gaussian_frechet(&a, &b)?.value);
        }
        let (m, e) = mean_stderr(&v);
        let m = m.unwrap_or(f64::NAN);
        s.row(&[n.to_string(), v.len().to_string(), num(m), opt(e)])?;
        rows.push((n, m, e));
    }
    s.finish()?;
    let pts = rows
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|r| ((r.0 as f64).log10(), r.1.log10()))
        .collect();
    save(
        &out.join("floor.svg"),
        svg::line_plot("Self-distance floor", "log10 samples", "log10 Gaussian Fréchet", &[Series::new("mean", pts)]),
    )?;
    Ok(rows)
}
