//! Paired standard/subproblem runs from identical seeds, compared after
//! every step.
//!
//! Layout: `<output>/compare.csv`, `report.txt`, and per seed
//! `seed-<s>/standard/`, `seed-<s>/subproblem/` and `seed-<s>/divergence.csv`.

use std::fmt::Write as _;
use std::fs;

use rayon::prelude::*;
use subgan_core::trainer::Regime;

use crate::config::{PlanRegime, RunConfig};
use crate::error::{HarnessError, Result};
use crate::plot;
use crate::runner::{lockstep, seed_dir, write_trace, Run, TraceVerdict, TRACK_TOLERANCE};
use crate::table::{self, flag, num, Sink};

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    pub verdicts: Vec<(u64, TraceVerdict)>,
    /// Equivalence-mode conditions the configuration breaks; non-empty
    /// means failure is the expected result.
    pub violations: Vec<String>,
    pub diverged: bool,
}

impl CompareOutcome {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|(_, v)| v.pass())
    }
}

/// Requires `regime = equivalence-pair`. A configuration outside
/// equivalence mode is rejected unless `allow_mismatch`, in which case it
/// runs and the report lists why it is not expected to agree.
pub fn compare_equivalence(cfg: &RunConfig, allow_mismatch: bool) -> Result<CompareOutcome> {
    if cfg.regime != PlanRegime::EquivalencePair {
        return Err(HarnessError::Invalid(format!(
            "compare needs regime = equivalence-pair, got {}",
            cfg.regime.name()
        )));
    }
    cfg.validate_settings()?;
    let violations = cfg.sub.equivalence_violations();
    if !violations.is_empty() && !allow_mismatch {
        return Err(HarnessError::Invalid(format!(
            "not in equivalence mode: {} (pass --allow-mismatch to run it as an expected failure)",
            violations.join("; ")
        )));
    }
    let root = &cfg.output;
    fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;

    let per_seed: Vec<(u64, TraceVerdict, bool)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = seed_dir(root, seed);
            let mut a = Run::start(cfg, Regime::Standard, seed, &dir.join("standard"))?;
            let mut b = vec![Run::start(cfg, Regime::Subproblem, seed, &dir.join("subproblem"))?];
            let trace = lockstep(&mut a, &mut b)?.pop().expect("one follower");
            write_trace(&dir.join("divergence.csv"), &trace, TRACK_TOLERANCE)?;
            let b = b.pop().expect("one follower");
            let diverged = a.finish()?.diverged() | b.finish()?.diverged();
            plot::emit_plots(&dir)?;
            Ok((seed, TraceVerdict::of(&trace, TRACK_TOLERANCE), diverged))
        })
        .collect::<Result<_>>()?;

    let mut csv = Sink::create(&root.join("compare.csv"), table::COMPARE)?;
    let mut report = format!("tolerance = {TRACK_TOLERANCE}\n");
    if violations.is_empty() {
        report.push_str("mode = equivalence\n");
    } else {
        report.push_str("mode = mismatched (expected to fail)\n");
        for v in &violations {
            let _ = writeln!(report, "violation = {v}");
        }
    }
    for (seed, v, _) in &per_seed {
        csv.row(&[
            seed.to_string(),
            v.steps.to_string(),
            num(v.max),
            v.worst_step.to_string(),
            v.first_violation.map(|s| s.to_string()).unwrap_or_default(),
            flag(v.pass()),
        ])?;
        let _ = writeln!(
            report,
            "seed {seed}: {} (max {:e} at step {})",
            if v.pass() { "pass" } else { "FAIL" },
            v.max,
            v.worst_step
        );
    }
    csv.finish()?;
    let outcome = CompareOutcome {
        verdicts: per_seed.iter().map(|(s, v, _)| (*s, *v)).collect(),
        violations,
        diverged: per_seed.iter().any(|(_, _, d)| *d),
    };
    let _ = writeln!(report, "result = {}", if outcome.pass() { "pass" } else { "fail" });
    let path = root.join("report.txt");
    fs::write(&path, report).map_err(|e| HarnessError::io(&path, e))?;
    Ok(outcome)
}
