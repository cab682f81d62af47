//! The two generator-training regimes and the shared discriminator step.
//!
//! *Standard*: `θ ← θ − η_g ∇_θ δ1(f_ψ(g_θ(z)), real)`.
//!
//! *Subproblem*: invert the "real" label through the frozen discriminator
//! by `N1` gradient steps on the samples themselves (step `λ1/N1`), then
//! regress `g_θ(z)` onto the resulting inverse examples by `N2` steps of
//! `δ2` (step `λ2/N2`). With SGD, `N1 = N2 = 1`, `δ2 = ℓ2` (mean over the
//! batch) and `η_g = λ1·λ2` the two produce the same `Δθ`.
//!
//! Inversion differentiates each example's own `δ1`, so inverse examples do
//! not depend on the batch size; the reported `δ1` values are batch means.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{ComputationRecord, Var};
use crate::error::{CoreError, Result};
use crate::loss::{discriminator_loss, label_loss, regression_loss, Discrepancy, Reduction};
use crate::model::{Model, ParamMode};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::Tensor;

/// Any loss above this (or non-finite) halts training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const REAL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regime {
    #[default]
    Standard,
    Subproblem,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Standard => "standard",
            Regime::Subproblem => "subproblem",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemConfig {
    /// Inversion discrepancy, also the standard regime's generator loss.
    pub delta1: Discrepancy,
    pub lambda1: f64,
    pub n1: usize,
    /// Regression loss (ℓ2 or ℓ1).
    pub delta2: Discrepancy,
    pub delta2_reduction: Reduction,
    pub lambda2: f64,
    pub n2: usize,
    pub optimizer: OptimizerKind,
    pub eta_f: f64,
    pub eta_g: f64,
}

impl Default for SubproblemConfig {
    /// `λ1 = 1`, `λ2 = η_g = 2e-4`: the split that reproduces a standard step.
    fn default() -> Self {
        SubproblemConfig {
            delta1: Discrepancy::Bce,
            lambda1: 1.0,
            n1: 1,
            delta2: Discrepancy::L2,
            delta2_reduction: Reduction::Mean,
            lambda2: 2e-4,
            n2: 1,
            optimizer: OptimizerKind::Sgd,
            eta_f: 2e-4,
            eta_g: 2e-4,
        }
    }
}

impl SubproblemConfig {
    /// Equivalence-mode configuration with `η_g = λ1·λ2`.
    pub fn equivalent(lambda1: f64, lambda2: f64, eta_f: f64) -> Self {
        SubproblemConfig {
            lambda1,
            lambda2,
            eta_g: lambda1 * lambda2,
            eta_f,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CoreError::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        rate("lambda1", self.lambda1)?;
        rate("lambda2", self.lambda2)?;
        rate("eta_f", self.eta_f)?;
        rate("eta_g", self.eta_g)?;
        if self.n1 == 0 || self.n2 == 0 {
            return Err(CoreError::Config("n1 and n2 must be at least 1".into()));
        }
        if !matches!(self.delta2, Discrepancy::L2 | Discrepancy::L1) {
            return Err(CoreError::UnsupportedRegressionLoss(self.delta2.name()));
        }
        Ok(())
    }

    /// Reasons this configuration is not in equivalence mode; empty if it is.
    pub fn equivalence_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.optimizer != OptimizerKind::Sgd {
            v.push(format!("optimizer is {}, not sgd", self.optimizer));
        }
        if self.n1 != 1 {
            v.push(format!("n1 = {} (must be 1)", self.n1));
        }
        if self.n2 != 1 {
            v.push(format!("n2 = {} (must be 1)", self.n2));
        }
        if self.delta2 != Discrepancy::L2 {
            v.push(format!("delta2 = {} (must be l2)", self.delta2));
        }
        if self.delta2_reduction != Reduction::Mean {
            v.push("delta2_reduction must be mean".into());
        }
        let prod = self.lambda1 * self.lambda2;
        if (self.eta_g - prod).abs() > 1e-12 * self.eta_g.abs().max(prod.abs()) {
            v.push(format!("eta_g = {} but lambda1*lambda2 = {}", self.eta_g, prod));
        }
        v
    }

    pub fn validate_equivalence(&self) -> Result<()> {
        self.validate()?;
        let v = self.equivalence_violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CoreError::Config(format!("not an equivalence configuration: {}", v.join("; "))))
        }
    }
}

/// Generated samples next to their inverse examples.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseBatch {
    pub x_initial: Tensor,
    pub x_prime: Tensor,
    /// Batch-mean `δ1` before each inversion step, then after the last one.
    pub delta1: Vec<f64>,
    /// Largest per-example `‖∇ₓ δ1‖` met along the trajectory.
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub loss_d: Option<f64>,
    /// `L_g` in the standard regime, the first regression loss in the subproblem regime.
    pub loss_g: Option<f64>,
    pub delta1: Vec<f64>,
    pub dtheta_norm: f64,
}

impl StepReport {
    pub fn delta1_first(&self) -> Option<f64> {
        self.delta1.first().copied()
    }

    pub fn delta1_last(&self) -> Option<f64> {
        self.delta1.last().copied()
    }

    fn worst(&self) -> Option<(&'static str, f64)> {
        let mut items: Vec<(&'static str, f64)> = Vec::new();
        items.extend(self.loss_d.map(|v| ("loss_d", v)));
        items.extend(self.loss_g.map(|v| ("loss_g", v)));
        items.extend(self.delta1.iter().map(|&v| ("delta1", v)));
        items.push(("dtheta_norm", self.dtheta_norm));
        items.into_iter().find(|(_, v)| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
    }
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CoreError::NonFinite(what))
    }
}

fn all_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite(what))
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// `L_g = δ(f_ψ(g_θ(z)), real)` and its gradient in `θ` (ψ frozen).
pub fn generator_loss_grad(g: &Model, f: &Model, z: &Tensor, loss: Discrepancy) -> Result<(f64, Vec<f64>)> {
    let mut rec = ComputationRecord::new();
    let zv = rec.constant(z.detached());
    let (x, gp) = g.apply(&mut rec, zv, ParamMode::Trainable)?;
    let (v, _) = f.apply(&mut rec, x, ParamMode::Frozen)?;
    let l = label_loss(&mut rec, v, REAL, loss, Reduction::Mean)?;
    let value = finite(rec.value(l).data()[0], "generator loss")?;
    rec.backward_from(l, &Tensor::scalar(1.0))?;
    let grad = rec.grads_flat(&gp);
    all_finite(&grad, "generator gradient")?;
    Ok((value, grad))
}

/// Per-example `δ1` gradients with respect to the samples, plus the batch-mean `δ1`.
pub fn inversion_gradient(f: &Model, x: &Tensor, delta1: Discrepancy) -> Result<(f64, Tensor)> {
    let mut rec = ComputationRecord::new();
    let xv = rec.leaf(x.detached().with_requires_grad(true));
    let (v, _) = f.apply(&mut rec, xv, ParamMode::Frozen)?;
    let l = label_loss(&mut rec, v, REAL, delta1, Reduction::Sum)?;
    let value = finite(rec.value(l).data()[0], "inversion discrepancy")? / x.batch() as f64;
    rec.backward_from(l, &Tensor::scalar(1.0))?;
    let grad = rec.grads_flat(&[xv]);
    all_finite(&grad, "inversion gradient")?;
    Ok((value, Tensor::new(x.shape().to_vec(), grad)?))
}

/// Records the regression of `g_θ(z)` onto the constant `x_prime`.
/// Returns the record, the loss node, the target node and the parameter leaves.
pub fn regression_record(
    g: &Model,
    z: &Tensor,
    x_prime: &Tensor,
    delta2: Discrepancy,
    reduction: Reduction,
) -> Result<(ComputationRecord, Var, Var, Vec<Var>)> {
    let mut rec = ComputationRecord::new();
    let zv = rec.constant(z.detached());
    let (x, gp) = g.apply(&mut rec, zv, ParamMode::Trainable)?;
    let target = rec.constant(x_prime.detached());
    let l = regression_loss(&mut rec, x, target, delta2, reduction)?;
    Ok((rec, l, target, gp))
}

fn regression_grad(g: &Model, z: &Tensor, x_prime: &Tensor, cfg: &SubproblemConfig) -> Result<(f64, Vec<f64>)> {
    let (mut rec, l, _, gp) = regression_record(g, z, x_prime, cfg.delta2, cfg.delta2_reduction)?;
    let value = finite(rec.value(l).data()[0], "regression loss")?;
    rec.backward_from(l, &Tensor::scalar(1.0))?;
    let grad = rec.grads_flat(&gp);
    all_finite(&grad, "regression gradient")?;
    Ok((value, grad))
}

fn apply_update(model: &mut Model, opt: &mut Optimizer, grad: &[f64], lr: f64) -> Vec<f64> {
    let mut p = model.flat_params();
    let delta = opt.step(&mut p, grad, lr);
    model.set_flat_params(&p).expect("length unchanged");
    delta
}

/// One plain gradient step on the discriminator against real (1) and fake (0).
/// `fake` must already be detached from the generator. On a non-finite loss
/// ψ is left untouched.
pub fn discriminator_step(f: &mut Model, real: &Tensor, fake: &Tensor, eta_f: f64) -> Result<StepReport> {
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0);
    discriminator_step_with(f, &mut opt, real, fake, eta_f)
}

fn discriminator_gradient(f: &Model, real: &Tensor, fake: &Tensor) -> Result<(f64, Vec<f64>)> {
    let mut rec = ComputationRecord::new();
    let rv = rec.constant(real.detached());
    let fv = rec.constant(fake.detached());
    let (lr, pr) = f.apply(&mut rec, rv, ParamMode::Trainable)?;
    // ψ appears twice on the record; its gradient is the sum over both copies
    let (lf, pf) = f.apply(&mut rec, fv, ParamMode::Trainable)?;
    let l = discriminator_loss(&mut rec, lr, lf)?;
    let value = finite(rec.value(l).data()[0], "discriminator loss")?;
    rec.backward_from(l, &Tensor::scalar(1.0))?;
    let mut grad = rec.grads_flat(&pr);
    for (a, b) in grad.iter_mut().zip(rec.grads_flat(&pf)) {
        *a += b;
    }
    all_finite(&grad, "discriminator gradient")?;
    Ok((value, grad))
}

fn discriminator_step_with(
    f: &mut Model,
    opt: &mut Optimizer,
    real: &Tensor,
    fake: &Tensor,
    eta_f: f64,
) -> Result<StepReport> {
    let (value, grad) = discriminator_gradient(f, real, fake)?;
    let delta = apply_update(f, opt, &grad, eta_f);
    Ok(StepReport {
        loss_d: Some(value),
        dtheta_norm: norm(&delta),
        ..StepReport::default()
    })
}

/// `θ ← θ − η_g ∇_θ L_g` with ψ frozen.
pub fn standard_generator_step(
    g: &mut Model,
    f: &Model,
    z: &Tensor,
    eta_g: f64,
    loss: Discrepancy,
) -> Result<StepReport> {
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0);
    standard_step_with(g, &mut opt, f, z, eta_g, loss)
}

fn standard_step_with(
    g: &mut Model,
    opt: &mut Optimizer,
    f: &Model,
    z: &Tensor,
    eta_g: f64,
    loss: Discrepancy,
) -> Result<StepReport> {
    let (value, grad) = generator_loss_grad(g, f, z, loss)?;
    let delta = apply_update(g, opt, &grad, eta_g);
    Ok(StepReport {
        loss_g: Some(value),
        dtheta_norm: norm(&delta),
        ..StepReport::default()
    })
}

/// Moves the samples themselves toward the "real" label: `N1` steps of
/// size `λ1/N1` on `δ1(f_ψ(x̃), real)`. With `n1 = 0` nothing moves.
pub fn invert_labels(f: &Model, x_tilde: &Tensor, cfg: &SubproblemConfig) -> Result<InverseBatch> {
    let x_initial = x_tilde.detached();
    let mut x = x_initial.clone();
    let mut delta1 = Vec::with_capacity(cfg.n1 + 1);
    let mut max_grad_norm = 0.0_f64;
    if cfg.n1 > 0 {
        let step = cfg.lambda1 / cfg.n1 as f64;
        for _ in 0..cfg.n1 {
            let (value, grad) = inversion_gradient(f, &x, cfg.delta1)?;
            delta1.push(value);
            for r in grad.rows() {
                max_grad_norm = max_grad_norm.max(norm(r));
            }
            for (xi, gi) in x.data_mut().iter_mut().zip(grad.data()) {
                *xi -= step * gi;
            }
            all_finite(x.data(), "inverse examples")?;
        }
    }
    let (last, _) = inversion_gradient(f, &x, cfg.delta1)?;
    delta1.push(last);
    Ok(InverseBatch {
        x_initial,
        x_prime: x,
        delta1,
        max_grad_norm,
    })
}

/// `N2` steps of `θ ← θ − (λ2/N2) ∇_θ δ2(g_θ(z), x')`, `x'` held constant.
pub fn regress_on_targets(g: &mut Model, z: &Tensor, x_prime: &Tensor, cfg: &SubproblemConfig) -> Result<StepReport> {
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0);
    regress_with(g, &mut opt, z, x_prime, cfg)
}

fn regress_with(
    g: &mut Model,
    opt: &mut Optimizer,
    z: &Tensor,
    x_prime: &Tensor,
    cfg: &SubproblemConfig,
) -> Result<StepReport> {
    let before = g.flat_params();
    let lr = cfg.lambda2 / cfg.n2 as f64;
    let mut first = None;
    for _ in 0..cfg.n2 {
        let (value, grad) = regression_grad(g, z, x_prime, cfg)?;
        first.get_or_insert(value);
        apply_update(g, opt, &grad, lr);
    }
    let after = g.flat_params();
    let diff: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    Ok(StepReport {
        loss_g: first,
        dtheta_norm: norm(&diff),
        ..StepReport::default()
    })
}

/// Inversion followed by regression: one decomposed generator update.
pub fn subproblem_generator_step(g: &mut Model, f: &Model, z: &Tensor, cfg: &SubproblemConfig) -> Result<StepReport> {
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0);
    subproblem_step_with(g, &mut opt, f, z, cfg)
}

fn subproblem_step_with(
    g: &mut Model,
    opt: &mut Optimizer,
    f: &Model,
    z: &Tensor,
    cfg: &SubproblemConfig,
) -> Result<StepReport> {
    let x_tilde = g.predict(z)?;
    let inv = invert_labels(f, &x_tilde, cfg)?;
    let mut report = regress_with(g, opt, z, &inv.x_prime, cfg)?;
    report.delta1 = inv.delta1;
    Ok(report)
}

/// Source of batches, `[n, d]` per draw.
pub trait BatchSource {
    fn draw(&mut self, n: usize) -> Tensor;
}

/// Owns both models and their optimizer state for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    generator: Model,
    discriminator: Model,
    cfg: SubproblemConfig,
    regime: Regime,
    opt_g: Optimizer,
    opt_f: Optimizer,
    steps_done: usize,
}

impl Trainer {
    pub fn new(generator: Model, discriminator: Model, cfg: SubproblemConfig, regime: Regime) -> Result<Self> {
        cfg.validate()?;
        if generator.output_dim() != discriminator.input_dim() || discriminator.output_dim() != 1 {
            return Err(CoreError::Architecture(format!(
                "generator emits {} values, discriminator takes {} and emits {}",
                generator.output_dim(),
                discriminator.input_dim(),
                discriminator.output_dim()
            )));
        }
        let opt_g = Optimizer::new(cfg.optimizer, generator.param_count());
        let opt_f = Optimizer::new(cfg.optimizer, discriminator.param_count());
        Ok(Trainer {
            generator,
            discriminator,
            cfg,
            regime,
            opt_g,
            opt_f,
            steps_done: 0,
        })
    }

    pub fn generator(&self) -> &Model {
        &self.generator
    }

    pub fn discriminator(&self) -> &Model {
        &self.discriminator
    }

    pub fn config(&self) -> &SubproblemConfig {
        &self.cfg
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn into_models(self) -> (Model, Model) {
        (self.generator, self.discriminator)
    }

    /// One iteration: discriminator update on `(real, g(z))`, then the
    /// generator update of the configured regime on the same `z`.
    /// On error or divergence the trainer is left as it was before the call.
    pub fn step(&mut self, real: &Tensor, z: &Tensor) -> Result<StepReport> {
        let saved = self.clone();
        let result = self.step_inner(real, z);
        match result {
            Ok(report) => match report.worst() {
                None if self.params_finite() => {
                    self.steps_done += 1;
                    Ok(report)
                }
                None => {
                    *self = saved;
                    Err(CoreError::NonFinite("parameters"))
                }
                Some((what, value)) => {
                    let step = self.steps_done;
                    *self = saved;
                    Err(CoreError::Diverged { step, what, value })
                }
            },
            Err(e) => {
                *self = saved;
                Err(e)
            }
        }
    }

    fn params_finite(&self) -> bool {
        self.generator.flat_params().iter().all(|v| v.is_finite())
            && self.discriminator.flat_params().iter().all(|v| v.is_finite())
    }

    fn step_inner(&mut self, real: &Tensor, z: &Tensor) -> Result<StepReport> {
        let fake = self.generator.predict(z)?;
        let d = discriminator_step_with(&mut self.discriminator, &mut self.opt_f, real, &fake, self.cfg.eta_f)?;
        let mut g = match self.regime {
            Regime::Standard => standard_step_with(
                &mut self.generator,
                &mut self.opt_g,
                &self.discriminator,
                z,
                self.cfg.eta_g,
                self.cfg.delta1,
            )?,
            Regime::Subproblem => {
                subproblem_step_with(&mut self.generator, &mut self.opt_g, &self.discriminator, z, &self.cfg)?
            }
        };
        g.loss_d = d.loss_d;
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub steps: usize,
    pub batch_size: usize,
    /// Observer cadence in steps; 0 disables periodic calls.
    pub eval_every: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub reports: Vec<StepReport>,
    /// Why training stopped early, if it did. The models are the last good ones.
    pub halted: Option<CoreError>,
    pub generator: Model,
    pub discriminator: Model,
}

/// Alternating discriminator/generator training. `observer` sees the
/// models at step 0, every `eval_every` steps and after the last step.
pub fn train(
    trainer: Trainer,
    data: &mut dyn BatchSource,
    noise: &mut dyn BatchSource,
    schedule: Schedule,
    observer: &mut dyn FnMut(usize, &Model, &Model),
) -> TrainOutcome {
    let mut trainer = trainer;
    let mut reports = Vec::with_capacity(schedule.steps);
    let mut halted = None;
    observer(0, trainer.generator(), trainer.discriminator());
    let mut last_observed = 0;
    for step in 1..=schedule.steps {
        let real = data.draw(schedule.batch_size);
        let z = noise.draw(schedule.batch_size);
        match trainer.step(&real, &z) {
            Ok(r) => reports.push(r),
            Err(e) => {
                halted = Some(e);
                break;
            }
        }
        if schedule.eval_every > 0 && step % schedule.eval_every == 0 {
            observer(step, trainer.generator(), trainer.discriminator());
            last_observed = step;
        }
    }
    let done = trainer.steps_done();
    if done != last_observed {
        observer(done, trainer.generator(), trainer.discriminator());
    }
    let (generator, discriminator) = trainer.into_models();
    TrainOutcome {
        reports,
        halted,
        generator,
        discriminator,
    }
}

/// `max|a − b| / max(max|a|, max|b|)`, 0 when both are zero.
pub fn max_relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
