//! Single training runs with their on-disk artifacts, and lockstep stepping
//! of several runs that share seeds.
//!
//! A run directory holds `config.txt`, `steps.csv`, `metrics.csv`,
//! `samples.csv`, `generator.ckpt`/`.bin`, `discriminator.ckpt`/`.bin`,
//! `status.txt` and the plots rendered from the CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use subgan_core::analysis::compute_kernel;
use subgan_core::data::{noise_seed, sample, DistributionSampler};
use subgan_core::metrics::{gaussian_frechet, moment_errors, MetricsSnapshot};
use subgan_core::trainer::{max_relative_difference, Regime, StepReport, Trainer};
use subgan_core::{CoreError, Model, Tensor, ToyDiscriminator, ToyGenerator};

use crate::checkpoint;
use crate::config::{ModelKind, RunConfig};
use crate::error::{HarnessError, Result};
use crate::plot;
use crate::table::{self, flag, num, opt, Sink};

/// Largest per-step relative parameter difference accepted between runs
/// that should follow the same trajectory.
pub const TRACK_TOLERANCE: f64 = 1e-6;

const G_INIT: u64 = 0x517C_C1B7_2722_0A95;
const F_INIT: u64 = 0x2545_F491_4F6C_DD1D;
const EVAL_REAL: u64 = 0x94D0_49BB_1331_11EB;
const EVAL_NOISE: u64 = 0xBF58_476D_1CE4_E5B9;
/// Noise points at which `‖K − I‖_F` is averaged in each snapshot.
const KERNEL_POINTS: usize = 8;

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// Freshly initialised models for `seed`.
pub fn build_models(cfg: &RunConfig, seed: u64) -> Result<(Model, Model)> {
    let d = cfg.data.dim();
    let n = cfg.noise.dim();
    match cfg.model {
        ModelKind::Toy => Ok((
            ToyGenerator::identity(d).to_model(),
            ToyDiscriminator::new(vec![0.0; d]).to_model(),
        )),
        ModelKind::Mlp => {
            let mut gd = vec![n];
            gd.extend(&cfg.generator_hidden);
            gd.push(d);
            let mut fd = vec![d];
            fd.extend(&cfg.discriminator_hidden);
            fd.push(1);
            let g = Model::mlp(&gd, cfg.activation)?.with_init(seed ^ G_INIT);
            let f = Model::mlp(&fd, cfg.activation)?.with_init(seed ^ F_INIT);
            Ok((g, f))
        }
    }
}

/// Trainer plus its data and noise streams, no artifacts.
#[derive(Debug, Clone)]
pub struct Stepper {
    trainer: Trainer,
    data: DistributionSampler,
    noise: DistributionSampler,
    batch: usize,
    steps: usize,
    halted: Option<CoreError>,
}

impl Stepper {
    pub fn new(cfg: &RunConfig, regime: Regime, seed: u64) -> Result<Stepper> {
        let (g, f) = build_models(cfg, seed)?;
        Ok(Stepper {
            trainer: Trainer::new(g, f, cfg.sub, regime)?,
            data: DistributionSampler::new(cfg.data.clone(), seed),
            noise: DistributionSampler::new(cfg.noise.clone(), noise_seed(seed)),
            batch: cfg.batch_size,
            steps: cfg.steps,
            halted: None,
        })
    }

    pub fn done(&self) -> bool {
        self.halted.is_some() || self.trainer.steps_done() >= self.steps
    }

    pub fn steps_done(&self) -> usize {
        self.trainer.steps_done()
    }

    pub fn halted(&self) -> Option<&CoreError> {
        self.halted.as_ref()
    }

    pub fn generator(&self) -> &Model {
        self.trainer.generator()
    }

    pub fn discriminator(&self) -> &Model {
        self.trainer.discriminator()
    }

    /// One training step. Divergence ends the run and is recorded, not returned.
    pub fn step(&mut self) -> Result<Option<StepReport>> {
        if self.done() {
            return Ok(None);
        }
        let real = self.data.draw_batch(self.batch);
        let z = self.noise.draw_batch(self.batch);
        match self.trainer.step(&real, &z) {
            Ok(r) => Ok(Some(r)),
            Err(e @ (CoreError::Diverged { .. } | CoreError::NonFinite(_))) => {
                self.halted = Some(e);
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Fixed evaluation sets for one seed.
#[derive(Debug, Clone)]
pub struct Evaluator {
    real: Tensor,
    z: Tensor,
    kernel_z: Vec<Tensor>,
    spec: subgan_core::data::DistributionSpec,
}

impl Evaluator {
    pub fn new(cfg: &RunConfig, seed: u64) -> Result<Evaluator> {
        let real = sample(&cfg.data, cfg.eval_samples, seed ^ EVAL_REAL)?;
        let z = sample(&cfg.noise, cfg.eval_samples, seed ^ EVAL_NOISE)?;
        let kernel_z = z.rows().take(KERNEL_POINTS).map(Tensor::row).collect();
        Ok(Evaluator {
            real,
            z,
            kernel_z,
            spec: cfg.data.clone(),
        })
    }

    pub fn real(&self) -> &Tensor {
        &self.real
    }

    pub fn generated(&self, g: &Model) -> Result<Tensor> {
        Ok(g.predict(&self.z)?)
    }

    /// Metrics of `g` plus the mean `‖K − I‖_F` over the kernel points.
    pub fn snapshot(&self, step: usize, g: &Model) -> Result<(MetricsSnapshot, f64)> {
        let fake = self.generated(g)?;
        let fd = gaussian_frechet(&fake, &self.real)?;
        let (mean_error, covariance_error) = moment_errors(&fake, &self.spec)?;
        let mut k = 0.0;
        for z in &self.kernel_z {
            k += compute_kernel(g, z)?.identity_distance();
        }
        let snap = MetricsSnapshot {
            step,
            gaussian_frechet: fd.value,
            mean_error,
            covariance_error,
            samples: fake.batch(),
            degenerate: fd.degenerate,
        };
        Ok((snap, k / self.kernel_z.len().max(1) as f64))
    }
}

/// Final state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub seed: u64,
    pub regime: Regime,
    pub steps_completed: usize,
    /// Divergence message when training halted early.
    pub halted: Option<String>,
    pub last: Option<MetricsSnapshot>,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        self.halted.is_some()
    }
}

/// A run that writes its artifacts as it goes.
pub struct Run {
    dir: PathBuf,
    seed: u64,
    regime: Regime,
    eval_every: usize,
    stepper: Stepper,
    eval: Option<Evaluator>,
    steps_csv: Sink,
    metrics_csv: Sink,
    last: Option<MetricsSnapshot>,
    last_eval: Option<usize>,
}

impl Run {
    pub fn start(cfg: &RunConfig, regime: Regime, seed: u64, dir: &Path) -> Result<Run> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut exact = cfg.clone();
        exact.seeds = vec![seed];
        exact.regime = match regime {
            Regime::Standard => crate::config::PlanRegime::Standard,
            Regime::Subproblem => crate::config::PlanRegime::Subproblem,
        };
        exact.output = dir.to_path_buf();
        let cfg_path = dir.join("config.txt");
        fs::write(&cfg_path, exact.to_text()).map_err(|e| HarnessError::io(&cfg_path, e))?;
        let stepper = Stepper::new(cfg, regime, seed)?;
        let eval = if cfg.steps > 0 { Some(Evaluator::new(cfg, seed)?) } else { None };
        let mut run = Run {
            dir: dir.to_path_buf(),
            seed,
            regime,
            eval_every: cfg.eval_every,
            stepper,
            eval,
            steps_csv: Sink::create(&dir.join("steps.csv"), table::STEPS)?,
            metrics_csv: Sink::create(&dir.join("metrics.csv"), table::METRICS)?,
            last: None,
            last_eval: None,
        };
        run.evaluate()?;
        Ok(run)
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn evaluate(&mut self) -> Result<()> {
        let Some(eval) = &self.eval else { return Ok(()) };
        let step = self.stepper.steps_done();
        let (s, k) = eval.snapshot(step, self.stepper.generator())?;
        self.metrics_csv.row(&[
            step.to_string(),
            num(s.gaussian_frechet),
            num(s.mean_error),
            num(s.covariance_error),
            s.samples.to_string(),
            flag(s.degenerate),
            num(k),
        ])?;
        self.last = Some(s);
        self.last_eval = Some(step);
        Ok(())
    }

    /// Advances one step; `false` once the run has ended.
    pub fn advance(&mut self) -> Result<bool> {
        let Some(r) = self.stepper.step()? else { return Ok(false) };
        let step = self.stepper.steps_done();
        self.steps_csv.row(&[
            step.to_string(),
            opt(r.loss_d),
            opt(r.loss_g),
            opt(r.delta1_first()),
            opt(r.delta1_last()),
            num(r.dtheta_norm),
        ])?;
        if self.eval_every > 0 && step % self.eval_every == 0 {
            self.evaluate()?;
        }
        Ok(true)
    }

    /// Final snapshot, samples, checkpoints, status and plots.
    pub fn finish(mut self) -> Result<RunOutcome> {
        let done = self.stepper.steps_done();
        if self.eval.is_some() && self.last_eval != Some(done) {
            self.evaluate()?;
        }
        let g = self.stepper.generator();
        let d = self.eval.as_ref().map_or(g.output_dim(), |e| e.real().width());
        let mut header = vec!["source".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut samples = Sink::create(&self.dir.join("samples.csv"), &header_refs)?;
        if let Some(eval) = &self.eval {
            for (source, t) in [("real", eval.real().clone()), ("generated", eval.generated(g)?)] {
                for r in t.rows() {
                    let mut row = vec![source.to_string()];
                    row.extend(r.iter().map(|v| num(*v)));
                    samples.row(&row)?;
                }
            }
        }
        samples.finish()?;
        checkpoint::save_text(g, &self.dir.join("generator.ckpt"))?;
        checkpoint::save_binary(g, &self.dir.join("generator.bin"))?;
        let f = self.stepper.discriminator();
        checkpoint::save_text(f, &self.dir.join("discriminator.ckpt"))?;
        checkpoint::save_binary(f, &self.dir.join("discriminator.bin"))?;
        let halted = self.stepper.halted().map(ToString::to_string);
        let status = match &halted {
            None => format!("status = completed\nsteps_completed = {done}\n"),
            Some(m) => format!("status = diverged\nsteps_completed = {done}\nreason = {m}\n"),
        };
        let status_path = self.dir.join("status.txt");
        fs::write(&status_path, status).map_err(|e| HarnessError::io(&status_path, e))?;
        self.steps_csv.finish()?;
        self.metrics_csv.finish()?;
        plot::emit_run(&self.dir)?;
        Ok(RunOutcome {
            dir: self.dir,
            seed: self.seed,
            regime: self.regime,
            steps_completed: done,
            halted,
            last: self.last,
        })
    }
}

/// Runs one configuration for one seed to the end.
pub fn run_single(cfg: &RunConfig, regime: Regime, seed: u64, dir: &Path) -> Result<RunOutcome> {
    let mut run = Run::start(cfg, regime, seed, dir)?;
    while run.advance()? {}
    run.finish()
}

/// Relative parameter difference after one lockstep step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub generator: f64,
    pub discriminator: f64,
}

impl Divergence {
    pub fn max(&self) -> f64 {
        if self.generator.is_nan() || self.discriminator.is_nan() {
            f64::NAN
        } else {
            self.generator.max(self.discriminator)
        }
    }

    pub fn between(step: usize, a: &Stepper, b: &Stepper) -> Divergence {
        Divergence {
            step,
            generator: max_relative_difference(&a.generator().flat_params(), &b.generator().flat_params()),
            discriminator: max_relative_difference(&a.discriminator().flat_params(), &b.discriminator().flat_params()),
        }
    }
}

/// Summary of a divergence trace against a tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceVerdict {
    pub steps: usize,
    pub max: f64,
    pub worst_step: usize,
    pub first_violation: Option<usize>,
}

impl TraceVerdict {
    pub fn of(trace: &[Divergence], tolerance: f64) -> TraceVerdict {
        let mut v = TraceVerdict {
            steps: trace.len(),
            max: 0.0,
            worst_step: 0,
            first_violation: None,
        };
        for d in trace {
            let m = d.max();
            if m > v.max || m.is_nan() {
                v.max = m;
                v.worst_step = d.step;
            }
            if !(m <= tolerance) && v.first_violation.is_none() {
                v.first_violation = Some(d.step);
            }
        }
        v
    }

    pub fn pass(&self) -> bool {
        self.first_violation.is_none()
    }
}

pub fn write_trace(path: &Path, trace: &[Divergence], tolerance: f64) -> Result<()> {
    let mut s = Sink::create(path, table::DIVERGENCE)?;
    for d in trace {
        s.row(&[
            d.step.to_string(),
            num(d.generator),
            num(d.discriminator),
            num(d.max()),
            flag(d.max() <= tolerance),
        ])?;
    }
    s.finish()
}

/// Steps `lead` and every follower together until all have ended. Returns
/// each follower's divergence from `lead` after every step both completed.
/// Runs that share the seed draw the same batches, so any difference comes
/// from the update rules alone.
pub fn lockstep(lead: &mut Run, followers: &mut [Run]) -> Result<Vec<Vec<Divergence>>> {
    let mut traces = vec![Vec::new(); followers.len()];
    loop {
        let mut any = lead.advance()?;
        let lead_step = lead.stepper().steps_done();
        for (f, trace) in followers.iter_mut().zip(&mut traces) {
            let moved = f.advance()?;
            any |= moved;
            if moved && f.stepper().steps_done() == lead_step && lead.stepper().halted().is_none() {
                trace.push(Divergence::between(lead_step, lead.stepper(), f.stepper()));
            }
        }
        if !any {
            return Ok(traces);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_tracks_worst_and_first_violation() {
        let t = [
            Divergence { step: 1, generator: 1e-9, discriminator: 0.0 },
            Divergence { step: 2, generator: 2e-6, discriminator: 0.0 },
            Divergence { step: 3, generator: 1e-7, discriminator: 5e-6 },
        ];
        let v = TraceVerdict::of(&t, 1e-6);
        assert_eq!(v.first_violation, Some(2));
        assert_eq!(v.worst_step, 3);
        assert_eq!(v.max, 5e-6);
        assert!(TraceVerdict::of(&t[..1], 1e-6).pass());
        let nan = [Divergence { step: 1, generator: f64::NAN, discriminator: 0.0 }];
        assert!(!TraceVerdict::of(&nan, 1e-6).pass());
    }
}
