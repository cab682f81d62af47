//! Executes runs and plans. Each run owns its models; jobs run in parallel
//! on the rayon pool and their results are joined at the end, so the
//! artifacts do not depend on scheduling.
//!
//! Sweep layout: `<output>/plan.txt`, `summary.csv`, `tracking.csv`,
//! `floor.csv`, `sweep.svg` and `<output>/<condition>/seed-<s>/` run
//! directories. Conditions that should reproduce the baseline are stepped
//! in lockstep with it and get a `divergence.csv` next to their CSVs.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use subgan_core::data::sample;
use subgan_core::metrics::gaussian_frechet;
use subgan_core::trainer::Regime;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::plan::ExperimentPlan;
use crate::plot;
use crate::runner::{lockstep, run_single, seed_dir, write_trace, Evaluator, Run, RunOutcome, TraceVerdict, TRACK_TOLERANCE};
use crate::table::{self, mean_stderr, num, opt, Sink};

/// Offset for the second evaluation-size sample in the self-distance floor.
const FLOOR_SEED: u64 = 0xD6E8_FEB8_6659_FD93;

/// Runs a single-regime configuration for every seed into `<output>/seed-<s>/`.
pub fn run_seeds(cfg: &RunConfig, regime: Regime) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    cfg.seeds
        .par_iter()
        .map(|&s| run_single(cfg, regime, s, &seed_dir(&cfg.output, s)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracked {
    pub condition: String,
    pub seed: u64,
    pub verdict: TraceVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// `(condition, outcome)` in plan order, seeds in config order.
    pub runs: Vec<(String, RunOutcome)>,
    pub tracking: Vec<Tracked>,
}

impl SweepOutcome {
    pub fn diverged(&self) -> bool {
        self.runs.iter().any(|(_, r)| r.diverged())
    }

    pub fn tracking_ok(&self) -> bool {
        self.tracking.iter().all(|t| t.verdict.pass())
    }
}

enum Job {
    /// Baseline and the conditions that should follow it, one seed.
    Group { seed: u64, members: Vec<usize> },
    Single { seed: u64, index: usize },
}

struct JobResult {
    runs: Vec<(usize, RunOutcome)>,
    tracking: Vec<(usize, TraceVerdict)>,
}

fn run_job(plan: &ExperimentPlan, root: &Path, job: &Job) -> Result<JobResult> {
    let dir = |i: usize, seed: u64| seed_dir(&root.join(&plan.conditions[i].name), seed);
    match *job {
        Job::Single { seed, index } => {
            let c = &plan.conditions[index];
            let out = run_single(&c.cfg, c.regime, seed, &dir(index, seed))?;
            Ok(JobResult {
                runs: vec![(index, out)],
                tracking: Vec::new(),
            })
        }
        Job::Group { seed, ref members } => {
            let start = |i: usize| {
                let c = &plan.conditions[i];
                Run::start(&c.cfg, c.regime, seed, &dir(i, seed))
            };
            let mut lead = start(members[0])?;
            let mut followers = members[1..].iter().map(|&i| start(i)).collect::<Result<Vec<_>>>()?;
            let traces = lockstep(&mut lead, &mut followers)?;
            let mut tracking = Vec::new();
            for (&i, trace) in members[1..].iter().zip(&traces) {
                write_trace(&dir(i, seed).join("divergence.csv"), trace, TRACK_TOLERANCE)?;
                tracking.push((i, TraceVerdict::of(trace, TRACK_TOLERANCE)));
            }
            let mut runs = vec![(members[0], lead.finish()?)];
            for (&i, f) in members[1..].iter().zip(followers) {
                let d = f.dir().to_path_buf();
                runs.push((i, f.finish()?));
                plot::emit_plots(&d)?;
            }
            Ok(JobResult { runs, tracking })
        }
    }
}

/// Runs every condition of `plan` for every seed and writes the joined tables.
pub fn run_sweep(plan: &ExperimentPlan) -> Result<SweepOutcome> {
    let root = plan.base.output.clone();
    fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
    let plan_path = root.join("plan.txt");
    fs::write(&plan_path, plan.describe()).map_err(|e| HarnessError::io(&plan_path, e))?;

    let followers: Vec<usize> = (0..plan.conditions.len())
        .filter(|&i| plan.tracks_baseline(&plan.conditions[i]))
        .collect();
    let mut jobs = Vec::new();
    for &seed in &plan.base.seeds {
        let mut members = vec![0];
        members.extend(&followers);
        jobs.push(Job::Group { seed, members });
        for i in 1..plan.conditions.len() {
            if !followers.contains(&i) {
                jobs.push(Job::Single { seed, index: i });
            }
        }
    }
    let results: Vec<JobResult> = jobs.par_iter().map(|j| run_job(plan, &root, j)).collect::<Result<_>>()?;

    let seeds = &plan.base.seeds;
    let mut by_condition: Vec<Vec<Option<RunOutcome>>> = vec![vec![None; seeds.len()]; plan.conditions.len()];
    let mut tracking = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        let seed = match job {
            Job::Group { seed, .. } | Job::Single { seed, .. } => *seed,
        };
        let k = seeds.iter().position(|&s| s == seed).expect("seed from plan");
        for (i, out) in res.runs {
            by_condition[i][k] = Some(out);
        }
        for (i, verdict) in res.tracking {
            tracking.push(Tracked {
                condition: plan.conditions[i].name.clone(),
                seed,
                verdict,
            });
        }
    }
    tracking.sort_by_key(|t| {
        let i = plan.conditions.iter().position(|c| c.name == t.condition).unwrap_or(0);
        let k = seeds.iter().position(|&s| s == t.seed).unwrap_or(0);
        (i, k)
    });
    let runs: Vec<(String, RunOutcome)> = plan
        .conditions
        .iter()
        .zip(by_condition)
        .flat_map(|(c, outs)| outs.into_iter().map(move |o| (c.name.clone(), o.expect("every job ran"))))
        .collect();

    write_summary(plan, &root, &runs)?;
    let mut t = Sink::create(&root.join("tracking.csv"), table::TRACKING)?;
    for tr in &tracking {
        let v = &tr.verdict;
        t.row(&[
            tr.condition.clone(),
            tr.seed.to_string(),
            v.steps.to_string(),
            num(v.max),
            v.worst_step.to_string(),
            table::flag(v.pass()),
        ])?;
    }
    t.finish()?;
    write_floor(&plan.base, &root)?;
    plot::emit_plots(&root)?;
    Ok(SweepOutcome { runs, tracking })
}

fn write_summary(plan: &ExperimentPlan, root: &Path, runs: &[(String, RunOutcome)]) -> Result<()> {
    let mut s = Sink::create(&root.join("summary.csv"), table::SUMMARY)?;
    for c in &plan.conditions {
        let mine: Vec<&RunOutcome> = runs.iter().filter(|(n, _)| *n == c.name).map(|(_, r)| r).collect();
        let completed: Vec<&RunOutcome> = mine.iter().copied().filter(|r| !r.diverged()).collect();
        let finals = |f: fn(&subgan_core::metrics::MetricsSnapshot) -> f64| -> Vec<f64> {
            completed.iter().filter_map(|r| r.last.as_ref().map(f)).collect()
        };
        let (fm, fs) = mean_stderr(&finals(|m| m.gaussian_frechet));
        let (mm, _) = mean_stderr(&finals(|m| m.mean_error));
        let (cm, _) = mean_stderr(&finals(|m| m.covariance_error));
        let sub = &c.cfg.sub;
        s.row(&[
            c.name.clone(),
            c.label.clone(),
            c.regime.name().to_string(),
            num(sub.lambda1),
            num(sub.lambda2),
            sub.n1.to_string(),
            sub.n2.to_string(),
            sub.delta2.to_string(),
            sub.optimizer.to_string(),
            mine.len().to_string(),
            completed.len().to_string(),
            (mine.len() - completed.len()).to_string(),
            opt(fm),
            opt(fs),
            opt(mm),
            opt(cm),
        ])?;
    }
    s.finish()
}

/// Distance between two independent evaluation-size samples of the data,
/// the level below which no generator can be told apart from the target.
fn write_floor(cfg: &RunConfig, root: &Path) -> Result<()> {
    let mut s = Sink::create(&root.join("floor.csv"), table::FLOOR)?;
    for &seed in &cfg.seeds {
        let eval = Evaluator::new(cfg, seed)?;
        let other = sample(&cfg.data, cfg.eval_samples, seed ^ FLOOR_SEED)?;
        let fd = gaussian_frechet(eval.real(), &other)?;
        s.row(&[seed.to_string(), cfg.eval_samples.to_string(), num(fd.value)])?;
    }
    s.finish()
}
