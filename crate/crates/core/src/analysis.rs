//! Diagnostics for how a generator update moves its outputs.
//!
//! The parameter Jacobian `D_θ(x)` of a generator output gives the `d × d`
//! kernel `K_θ(x) = D_θ(x) D_θ(x)ᵀ`. To first order a standard step with
//! rate `η_g` moves the output to `x − η_g K_θ(x) ∇ₓ L_g`; for the linear
//! toy generator `x = B z̃` the kernel is `‖z̃‖² I`.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{jacobian, ComputationRecord, Wrt};
use crate::data::{noise_seed, DistributionSampler, DistributionSpec};
use crate::error::{CoreError, Result};
use crate::linalg;
use crate::loss::{label_loss, Discrepancy, Reduction};
use crate::model::{Model, ParamMode, ToyDiscriminator, ToyGenerator};
use crate::tensor::Tensor;
use crate::trainer::{
    discriminator_step, generator_loss_grad, invert_labels, standard_generator_step, train, Regime, Schedule,
    SubproblemConfig, Trainer,
};

/// `K_θ(x) = D_θ(x) D_θ(x)ᵀ` for one input, row-major `dim × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl KernelMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(self.dim, &self.data)
    }

    /// Largest `|K_ij − K_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::symmetric_eigenvalues(self.dim, &self.data)
    }

    /// `max |K − c·I|` entrywise.
    pub fn max_deviation_from_scaled_identity(&self, c: f64) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { c } else { 0.0 };
                worst = worst.max((self.get(i, j) - target).abs());
            }
        }
        worst
    }

    /// `‖K − I‖_F`.
    pub fn identity_distance(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let t = if i == j { 1.0 } else { 0.0 };
                s += (self.get(i, j) - t) * (self.get(i, j) - t);
            }
        }
        libm::sqrt(s)
    }

    /// `K v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

fn single(z: &Tensor, n: usize) -> Result<Tensor> {
    match z.shape().len() {
        1 if z.len() == n => z.detached().reshaped(vec![1, n]),
        2 if z.batch() == 1 && z.width() == n => Ok(z.detached()),
        _ => Err(CoreError::shape("single example", &[1, n], z.shape())),
    }
}

pub fn compute_kernel(g: &Model, z: &Tensor) -> Result<KernelMatrix> {
    let j = jacobian(g, z, Wrt::Parameters)?;
    Ok(KernelMatrix {
        dim: j.rows,
        data: j.outer_gram(),
    })
}

/// `∇ₓ δ(f(x), real)` for a single example.
fn label_grad_input(f: &Model, x: &Tensor, loss: Discrepancy) -> Result<Vec<f64>> {
    let mut rec = ComputationRecord::new();
    let xv = rec.leaf(x.detached().with_requires_grad(true));
    let (v, _) = f.apply(&mut rec, xv, ParamMode::Frozen)?;
    let l = label_loss(&mut rec, v, 1.0, loss, Reduction::Mean)?;
    rec.backward_from(l, &Tensor::scalar(1.0))?;
    Ok(rec.grads_flat(&[xv]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorPrediction {
    pub x_before: Vec<f64>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
    pub residual_norm: f64,
}

/// Compares the output after one real standard step (on a clone of `g`)
/// with the kernel prediction `x − η_g K_θ(x) ∇ₓ L_g`.
pub fn taylor_check(g: &Model, f: &Model, z: &Tensor, eta_g: f64, loss: Discrepancy) -> Result<TaylorPrediction> {
    let z = single(z, g.input_dim())?;
    let x = g.predict(&z)?;
    let kernel = compute_kernel(g, &z)?;
    let grad_x = label_grad_input(f, &x, loss)?;
    let k_grad = kernel.apply(&grad_x);
    let predicted: Vec<f64> = x.data().iter().zip(&k_grad).map(|(a, b)| a - eta_g * b).collect();

    let mut stepped = g.clone();
    standard_generator_step(&mut stepped, f, &z, eta_g, loss)?;
    let actual = stepped.predict(&z)?.into_data();
    let residual_norm = libm::sqrt(
        actual
            .iter()
            .zip(&predicted)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>(),
    );
    Ok(TaylorPrediction {
        x_before: x.into_data(),
        predicted,
        actual,
        residual_norm,
    })
}

/// The generator gradient two ways: straight back-propagation, and the
/// product `D_y(L) · D_x(y) · D_θ(x)` of separately built Jacobians
/// (`y` is the discriminator logit). Single example only.
pub fn chain_factorized_gradient(g: &Model, f: &Model, z: &Tensor, loss: Discrepancy) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = single(z, g.input_dim())?;
    let (_, direct) = generator_loss_grad(g, f, &z, loss)?;

    let x = g.predict(&z)?;
    let d_theta_x = jacobian(g, &z, Wrt::Parameters)?;
    let d_x_y = jacobian(f, &x, Wrt::Input)?;
    let y = f.predict(&x)?;
    let mut rec = ComputationRecord::new();
    let yv = rec.leaf(y.with_requires_grad(true));
    let l = label_loss(&mut rec, yv, 1.0, loss, Reduction::Mean)?;
    rec.backward_from(l, &Tensor::scalar(1.0))?;
    let d_y_l = rec.grads_flat(&[yv]);

    let row = d_x_y.left_mul(&d_y_l);
    let chained = d_theta_x.left_mul(&row);
    Ok((direct, chained))
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = libm::sqrt(a.iter().map(|v| v * v).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|v| v * v).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Nonnegative least squares for `w ≈ α·x1 − β·x0`.
pub fn fit_class_mean_coefficients(w: &[f64], x1: &[f64], x0: &[f64]) -> (f64, f64) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let neg0: Vec<f64> = x0.iter().map(|v| -v).collect();
    let resid = |a: f64, b: f64| {
        w.iter()
            .zip(x1)
            .zip(&neg0)
            .map(|((wi, u), v)| {
                let r = wi - a * u - b * v;
                r * r
            })
            .sum::<f64>()
    };
    let (uu, vv, uv) = (dot(x1, x1), dot(&neg0, &neg0), dot(x1, &neg0));
    let (wu, wv) = (dot(w, x1), dot(w, &neg0));
    let mut candidates = vec![(0.0, 0.0)];
    if uu > 0.0 {
        candidates.push(((wu / uu).max(0.0), 0.0));
    }
    if vv > 0.0 {
        candidates.push((0.0, (wv / vv).max(0.0)));
    }
    let det = uu * vv - uv * uv;
    if det.abs() > 1e-12 * (uu * vv).max(f64::MIN_POSITIVE) {
        let a = (wu * vv - wv * uv) / det;
        let b = (wv * uu - wu * uv) / det;
        if a >= 0.0 && b >= 0.0 {
            candidates.push((a, b));
        }
    }
    candidates
        .into_iter()
        .min_by(|p, q| resid(p.0, p.1).total_cmp(&resid(q.0, q.1)))
        .expect("non-empty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub w: Vec<f64>,
    /// Mean of the real (label 1) examples.
    pub real_mean: Vec<f64>,
    /// Mean of the generated (label 0) examples.
    pub fake_mean: Vec<f64>,
    /// `cos(w, X̄1 − X̄0)`; `None` if either vector vanishes.
    pub alignment: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl AlignmentReport {
    pub fn new(w: Vec<f64>, real_mean: Vec<f64>, fake_mean: Vec<f64>) -> Self {
        let diff: Vec<f64> = real_mean.iter().zip(&fake_mean).map(|(a, b)| a - b).collect();
        let alignment = cosine(&w, &diff);
        let (alpha, beta) = fit_class_mean_coefficients(&w, &real_mean, &fake_mean);
        AlignmentReport {
            w,
            real_mean,
            fake_mean,
            alignment,
            alpha,
            beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyAnalysisReport {
    pub alignment: AlignmentReport,
    /// `‖b − μ‖`, the exact mean error of `x = A z + b` under `z ~ N(0, I)`.
    pub mean_error: f64,
    /// `‖A Aᵀ − Σ‖_F`.
    pub covariance_error: f64,
    pub generator: ToyGenerator,
    pub steps_completed: usize,
    pub halted: Option<CoreError>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySchedule {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub regime: Regime,
}

/// Exact mean and covariance of a toy generator's output under standard normal noise.
pub fn toy_generator_moments(g: &ToyGenerator) -> (Vec<f64>, Vec<f64>) {
    let d = g.dim();
    let c = d + 1;
    let b = g.b();
    let mean = (0..d).map(|i| b[i * c + d]).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] = (0..d).map(|k| b[i * c + k] * b[j * c + k]).sum();
        }
    }
    (mean, cov)
}

/// Trains the linear-generator / logistic-discriminator GAN on `N(μ, Σ)`
/// from `B = [I | 0]`, `w = 0`, and reports how far the generated mean and
/// covariance end up from the target.
pub fn toy_experiment(mu: &[f64], sigma: &[f64], cfg: &SubproblemConfig, schedule: ToySchedule) -> Result<ToyAnalysisReport> {
    let spec = DistributionSpec::gaussian(mu.to_vec(), sigma.to_vec())?;
    let d = mu.len();
    let g = ToyGenerator::identity(d).to_model();
    let f = ToyDiscriminator::new(vec![0.0; d]).to_model();
    let trainer = Trainer::new(g, f, *cfg, schedule.regime)?;
    let mut data = DistributionSampler::new(spec.clone(), schedule.seed);
    let mut noise = DistributionSampler::new(DistributionSpec::standard_normal(d), noise_seed(schedule.seed));
    let outcome = train(
        trainer,
        &mut data,
        &mut noise,
        Schedule {
            steps: schedule.steps,
            batch_size: schedule.batch_size,
            eval_every: 0,
        },
        &mut |_, _, _| {},
    );
    let gen = ToyGenerator::from_model(&outcome.generator)?;
    let disc = ToyDiscriminator::from_model(&outcome.discriminator)?;
    let (gm, gc) = toy_generator_moments(&gen);
    let mean_error = libm::sqrt(gm.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
    let diff: Vec<f64> = gc.iter().zip(sigma).map(|(a, b)| a - b).collect();
    Ok(ToyAnalysisReport {
        alignment: AlignmentReport::new(disc.w().to_vec(), mu.to_vec(), gm),
        mean_error,
        covariance_error: linalg::frobenius(&diff),
        generator: gen,
        steps_completed: outcome.reports.len(),
        halted: outcome.halted,
    })
}

/// Trains a toy discriminator from `w = 0` on one fixed real batch from
/// `N(μ, Σ)` against one fixed fake batch from the identity generator.
pub fn pretrain_alignment(mu: &[f64], sigma: &[f64], steps: usize, eta_f: f64, batch: usize, seed: u64) -> Result<AlignmentReport> {
    let spec = DistributionSpec::gaussian(mu.to_vec(), sigma.to_vec())?;
    let d = mu.len();
    let real = DistributionSampler::new(spec, seed).draw_batch(batch);
    let fake = DistributionSampler::new(DistributionSpec::standard_normal(d), noise_seed(seed)).draw_batch(batch);
    let mut f = ToyDiscriminator::new(vec![0.0; d]).to_model();
    for _ in 0..steps {
        discriminator_step(&mut f, &real, &fake, eta_f)?;
    }
    Ok(AlignmentReport::new(f.flat_params(), real.row_mean(), fake.row_mean()))
}

/// Cosine between each inverse-example displacement `x' − x` and `w`;
/// `None` where either vanishes.
pub fn inverse_example_direction_check(f: &ToyDiscriminator, x_batch: &Tensor, lambda1: f64) -> Result<Vec<Option<f64>>> {
    let cfg = SubproblemConfig {
        lambda1,
        ..SubproblemConfig::default()
    };
    let inv = invert_labels(&f.to_model(), x_batch, &cfg)?;
    Ok(inv
        .x_prime
        .rows()
        .zip(inv.x_initial.rows())
        .map(|(a, b)| {
            let step: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
            cosine(&step, f.w())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_recovers_nonnegative_mix() {
        let x1 = [3.0, -2.0];
        let x0 = [0.5, 0.7];
        let w: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| 0.8 * a - 0.3 * b).collect();
        let (a, b) = fit_class_mean_coefficients(&w, &x1, &x0);
        assert!((a - 0.8).abs() < 1e-12 && (b - 0.3).abs() < 1e-12);
        // a target needing negative beta gets clamped
        let w2: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| 0.8 * a + 0.3 * b).collect();
        let (a2, b2) = fit_class_mean_coefficients(&w2, &x1, &x0);
        assert!(a2 >= 0.0 && b2 >= 0.0);
    }

    #[test]
    fn toy_moments_of_identity() {
        let (m, c) = toy_generator_moments(&ToyGenerator::identity(2));
        assert_eq!(m, vec![0.0, 0.0]);
        assert_eq!(c, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_discriminator_gives_no_direction() {
        let f = ToyDiscriminator::new(vec![0.0, 0.0]);
        let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(inverse_example_direction_check(&f, &x, 0.5).unwrap(), vec![None]);
    }

    #[test]
    fn kernel_requires_single_example() {
        let g = ToyGenerator::identity(2).to_model();
        let z = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(compute_kernel(&g, &z).is_err());
    }
}
