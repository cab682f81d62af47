//! Sample-quality metrics on raw data: Gaussian Fréchet distance and
//! moment errors against a distribution's true mean and covariance.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::DistributionSpec;
use crate::error::{CoreError, Result};
use crate::linalg;
use crate::tensor::Tensor;

/// Samples per side used for evaluation snapshots.
pub const DEFAULT_EVAL_SAMPLES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrechetDistance {
    pub value: f64,
    /// Set when a fitted covariance needed eigenvalue clipping or is
    /// numerically singular.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSnapshot {
    pub step: usize,
    pub gaussian_frechet: f64,
    pub mean_error: f64,
    pub covariance_error: f64,
    pub samples: usize,
    pub degenerate: bool,
}

/// Sample mean and unbiased sample covariance (row-major `d × d`).
pub fn sample_moments(samples: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let n = samples.batch();
    let d = samples.width();
    let mean = samples.row_mean();
    let mut cov = vec![0.0; d * d];
    if n < 2 {
        return (mean, cov);
    }
    for r in samples.rows() {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    (mean, cov)
}

/// Fréchet distance between two Gaussians given by their moments:
/// `‖m_a − m_b‖² + tr(C_a + C_b − 2 (C_a^{1/2} C_b C_a^{1/2})^{1/2})`.
pub fn frechet_from_moments(mean_a: &[f64], cov_a: &[f64], mean_b: &[f64], cov_b: &[f64]) -> FrechetDistance {
    let d = mean_a.len();
    let (ca, clipped_a) = linalg::clip_psd(d, cov_a);
    let (cb, clipped_b) = linalg::clip_psd(d, cov_b);
    let tiny = |c: &[f64]| {
        let ev = linalg::symmetric_eigenvalues(d, c);
        let top = ev.last().copied().unwrap_or(0.0).max(0.0);
        ev.first().copied().unwrap_or(0.0) <= 1e-12 * top.max(f64::MIN_POSITIVE)
    };
    let degenerate = clipped_a + clipped_b > 0 || tiny(&ca) || tiny(&cb);

    let sa = linalg::psd_sqrt(d, &ca);
    let inner = linalg::matmul(d, &linalg::matmul(d, &sa, &cb), &sa);
    let cross = linalg::trace(d, &linalg::psd_sqrt(d, &inner));
    let mean_term: f64 = mean_a.iter().zip(mean_b).map(|(a, b)| (a - b) * (a - b)).sum();
    let value = mean_term + linalg::trace(d, &ca) + linalg::trace(d, &cb) - 2.0 * cross;
    FrechetDistance {
        value: value.max(0.0),
        degenerate,
    }
}

/// Gaussian Fréchet distance between Gaussian fits of two sample sets.
pub fn gaussian_frechet(samples_a: &Tensor, samples_b: &Tensor) -> Result<FrechetDistance> {
    let d = samples_a.width();
    if samples_b.width() != d {
        return Err(CoreError::shape("gaussian_frechet", samples_a.shape(), samples_b.shape()));
    }
    if samples_a.batch() < d + 1 || samples_b.batch() < d + 1 {
        return Err(CoreError::Config(alloc::format!(
            "gaussian_frechet needs at least {} samples per side",
            d + 1
        )));
    }
    let (ma, ca) = sample_moments(samples_a);
    let (mb, cb) = sample_moments(samples_b);
    Ok(frechet_from_moments(&ma, &ca, &mb, &cb))
}

/// Euclidean mean error and Frobenius covariance error of `samples`
/// against the true moments of `spec`.
pub fn moment_errors(samples: &Tensor, spec: &DistributionSpec) -> Result<(f64, f64)> {
    if samples.width() != spec.dim() {
        return Err(CoreError::shape("moment_errors", &[samples.batch(), spec.dim()], samples.shape()));
    }
    let (m, c) = sample_moments(samples);
    let mean_error = libm::sqrt(
        m.iter()
            .zip(spec.mean())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>(),
    );
    let diff: Vec<f64> = c.iter().zip(spec.covariance()).map(|(a, b)| a - b).collect();
    Ok((mean_error, linalg::frobenius(&diff)))
}
