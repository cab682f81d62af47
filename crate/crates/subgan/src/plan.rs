//! Experiment plans: a base configuration expanded into named conditions.
//!
//! Every sweep gets a `baseline` condition first, the standard regime at
//! the base `eta_g`.

use std::fmt;

use subgan_core::trainer::Regime;
use subgan_core::{Discrepancy, Reduction};

use crate::config::{PlanRegime, ResolvedFile, RunConfig};
use crate::error::{HarnessError, Origin, Result};

pub const RATE_SWEEP_LAMBDA1: [f64; 6] = [0.1, 0.25, 0.5, 0.75, 0.9, 1.0];
pub const FACTORIAL_N1: [usize; 5] = [1, 2, 3, 4, 5];
pub const FACTORIAL_N2: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// `δ2 ∈ {ℓ1, ℓ2} × N1 ∈ 1..5 × N2 ∈ {1, 2}` with `λ1 = 1/N1`, `λ2 = η_g/N2`.
    Factorial,
    /// `λ1` over [`RATE_SWEEP_LAMBDA1`] with `λ2 = η_g/λ1`.
    RateSweep,
    /// Cross product of the value lists in the configuration file.
    Grid,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::Factorial => "factorial",
            Template::RateSweep => "rate-sweep",
            Template::Grid => "grid",
        }
    }

    pub fn parse(s: &str) -> Option<Template> {
        match s {
            "factorial" => Some(Template::Factorial),
            "rate-sweep" | "rate_sweep" => Some(Template::RateSweep),
            "grid" => Some(Template::Grid),
            _ => None,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    /// Directory name, unique within the plan.
    pub name: String,
    /// Tick label in the sweep plot.
    pub label: String,
    pub regime: Regime,
    pub cfg: RunConfig,
}

impl Condition {
    pub fn is_baseline(&self) -> bool {
        self.name == "baseline"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub template: Template,
    /// Quantity varied across conditions, used as the sweep plot's x label.
    pub axis: String,
    pub base: RunConfig,
    pub conditions: Vec<Condition>,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+') { c } else { '_' })
        .collect()
}

fn baseline(base: &RunConfig) -> Condition {
    let mut cfg = base.clone();
    cfg.regime = PlanRegime::Standard;
    Condition {
        name: "baseline".into(),
        label: "baseline".into(),
        regime: Regime::Standard,
        cfg,
    }
}

fn subproblem(base: &RunConfig, name: String, label: String, edit: impl FnOnce(&mut RunConfig)) -> Condition {
    let mut cfg = base.clone();
    cfg.regime = PlanRegime::Subproblem;
    edit(&mut cfg);
    Condition {
        name,
        label,
        regime: Regime::Subproblem,
        cfg,
    }
}

impl ExperimentPlan {
    pub fn new(template: Template, resolved: &ResolvedFile) -> Result<ExperimentPlan> {
        let origin = Origin::Template(template.name().into());
        let base = resolved.base.clone();
        if template != Template::Grid && !resolved.axes.is_empty() {
            let keys: Vec<&str> = resolved.axes.iter().map(|a| a.key.as_str()).collect();
            return Err(HarnessError::config(
                origin,
                format!("defines its own conditions; remove the value lists for {}", keys.join(", ")),
            ));
        }
        let eta_g = base.sub.eta_g;
        let mut conditions = vec![baseline(&base)];
        let axis;
        match template {
            Template::RateSweep => {
                axis = "inversion rate lambda1".to_string();
                for l1 in RATE_SWEEP_LAMBDA1 {
                    conditions.push(subproblem(&base, format!("lambda1-{l1}"), l1.to_string(), |c| {
                        c.sub.lambda1 = l1;
                        c.sub.lambda2 = eta_g / l1;
                    }));
                }
            }
            Template::Factorial => {
                axis = "delta2 n1/n2".to_string();
                for d2 in [Discrepancy::L1, Discrepancy::L2] {
                    for n1 in FACTORIAL_N1 {
                        for n2 in FACTORIAL_N2 {
                            let name = format!("{d2}-n1-{n1}-n2-{n2}");
                            let label = format!("{d2} {n1}/{n2}");
                            conditions.push(subproblem(&base, name, label, |c| {
                                c.sub.delta2 = d2;
                                c.sub.n1 = n1;
                                c.sub.n2 = n2;
                                c.sub.lambda1 = 1.0 / n1 as f64;
                                c.sub.lambda2 = eta_g / n2 as f64;
                            }));
                        }
                    }
                }
            }
            Template::Grid => {
                let Some(regime) = base.regime.single() else {
                    return Err(HarnessError::config(origin, "a grid sweep needs regime standard or subproblem"));
                };
                axis = if resolved.axes.len() == 1 {
                    resolved.axes[0].key.clone()
                } else {
                    "condition".into()
                };
                let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
                for a in &resolved.axes {
                    combos = combos
                        .into_iter()
                        .flat_map(|c| {
                            a.values.iter().map(move |v| {
                                let mut c = c.clone();
                                c.push((a.key.clone(), v.clone()));
                                c
                            })
                        })
                        .collect();
                }
                for combo in combos {
                    let mut cfg = base.clone();
                    for (k, v) in &combo {
                        cfg.set(k, v).map_err(|m| HarnessError::config(origin.clone(), m))?;
                    }
                    let name = if combo.is_empty() {
                        regime.name().to_string()
                    } else {
                        combo.iter().map(|(k, v)| sanitize(&format!("{k}-{v}"))).collect::<Vec<_>>().join("_")
                    };
                    let label = combo.iter().map(|(_, v)| v.as_str()).collect::<Vec<_>>().join(" ");
                    conditions.push(Condition {
                        name,
                        label,
                        regime,
                        cfg,
                    });
                }
            }
        }
        for c in &conditions {
            c.cfg
                .validate()
                .map_err(|e| HarnessError::config(origin.clone(), format!("condition {}: {e}", c.name)))?;
        }
        for (i, c) in conditions.iter().enumerate() {
            if conditions[..i].iter().any(|o| o.name == c.name) {
                return Err(HarnessError::config(origin, format!("two conditions are named {}", c.name)));
            }
        }
        Ok(ExperimentPlan {
            template,
            axis,
            base,
            conditions,
        })
    }

    /// Whether `c` should reproduce the baseline trajectory: same settings,
    /// one inversion and one ℓ2 mean regression step, and either the
    /// unit split `λ1 = 1, λ2 = η_g` or plain SGD with `λ1·λ2 = η_g`.
    pub fn tracks_baseline(&self, c: &Condition) -> bool {
        if c.is_baseline() || c.regime != Regime::Subproblem {
            return false;
        }
        let (s, b) = (&c.cfg.sub, &self.base.sub);
        let mut same = c.cfg.clone();
        same.sub = self.base.sub;
        same.regime = self.base.regime;
        if same != self.base
            || s.n1 != 1
            || s.n2 != 1
            || s.delta2 != Discrepancy::L2
            || s.delta2_reduction != Reduction::Mean
            || s.delta1 != b.delta1
            || s.optimizer != b.optimizer
            || s.eta_f != b.eta_f
            || s.eta_g != b.eta_g
        {
            return false;
        }
        let unit = s.lambda1 == 1.0 && s.lambda2 == s.eta_g;
        unit || s.equivalence_violations().is_empty()
    }

    /// Text written to `plan.txt` at the sweep root.
    pub fn describe(&self) -> String {
        let mut s = format!("template = {}\naxis = {}\nconditions = ", self.template, self.axis);
        s.push_str(&self.conditions.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(", "));
        s.push_str("\n\n# base configuration\n");
        s.push_str(&self.base.to_text());
        s
    }
}
