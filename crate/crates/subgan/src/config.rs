//! Plain-text run configuration.
//!
//! One `key = value` per line, `#` starts a comment. Keys are the
//! [`SubproblemConfig`] field names plus the run settings listed in
//! [`KEYS`]. A value written as `a | b | c` declares a sweep axis; several
//! axes expand to their cross product.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use subgan_core::data::DistributionSpec;
use subgan_core::optim::OptimizerKind;
use subgan_core::trainer::{Regime, SubproblemConfig};
use subgan_core::{Activation, Discrepancy, Reduction};

use crate::error::{HarnessError, Origin, Result};

pub const KEYS: &[&str] = &[
    "plan_id",
    "regime",
    "model",
    "data",
    "noise",
    "generator_hidden",
    "discriminator_hidden",
    "activation",
    "delta1",
    "lambda1",
    "n1",
    "delta2",
    "delta2_reduction",
    "lambda2",
    "n2",
    "optimizer",
    "eta_f",
    "eta_g",
    "steps",
    "batch_size",
    "eval_every",
    "eval_samples",
    "seeds",
    "output",
];

/// Keys that may not carry a list of alternatives.
const SCALAR_ONLY: &[&str] = &["plan_id", "seeds", "output"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanRegime {
    Standard,
    Subproblem,
    /// Both regimes from identical seeds, compared step by step.
    EquivalencePair,
}

impl PlanRegime {
    pub fn name(self) -> &'static str {
        match self {
            PlanRegime::Standard => "standard",
            PlanRegime::Subproblem => "subproblem",
            PlanRegime::EquivalencePair => "equivalence-pair",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(PlanRegime::Standard),
            "subproblem" => Some(PlanRegime::Subproblem),
            "equivalence-pair" | "equivalence_pair" | "equivalence" => Some(PlanRegime::EquivalencePair),
            _ => None,
        }
    }

    /// The single-run regime, `None` for the paired regime.
    pub fn single(self) -> Option<Regime> {
        match self {
            PlanRegime::Standard => Some(Regime::Standard),
            PlanRegime::Subproblem => Some(Regime::Subproblem),
            PlanRegime::EquivalencePair => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mlp,
    /// Linear generator `x = B z̃` from `[I | 0]` and logistic discriminator from `w = 0`.
    Toy,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Toy => "toy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plan_id: String,
    pub regime: PlanRegime,
    pub model: ModelKind,
    pub data: DistributionSpec,
    pub noise: DistributionSpec,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub activation: Activation,
    pub sub: SubproblemConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            plan_id: "run".into(),
            regime: PlanRegime::Subproblem,
            model: ModelKind::Mlp,
            data: DistributionSpec::circle_mixture(8, 2.0, 0.05).expect("valid mixture"),
            noise: DistributionSpec::standard_normal(2),
            generator_hidden: vec![32, 32],
            discriminator_hidden: vec![32, 32],
            activation: Activation::Tanh,
            sub: SubproblemConfig::default(),
            steps: 1000,
            batch_size: 64,
            eval_every: 100,
            eval_samples: subgan_core::metrics::DEFAULT_EVAL_SAMPLES,
            seeds: vec![0],
            output: PathBuf::from("runs"),
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{key}`: cannot read `{v}`"))
}

fn parse_rate(key: &str, v: &str) -> std::result::Result<f64, String> {
    let x: f64 = parse_num(key, v)?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("`{key}` must be positive and finite, got `{v}`"))
    }
}

fn parse_count(key: &str, v: &str) -> std::result::Result<usize, String> {
    match parse_num(key, v)? {
        0 => Err(format!("`{key}` must be at least 1")),
        n => Ok(n),
    }
}

fn parse_widths(key: &str, v: &str) -> std::result::Result<Vec<usize>, String> {
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|t| {
            let w: usize = parse_num(key, t.trim())?;
            if w == 0 {
                Err(format!("`{key}`: layer widths must be positive"))
            } else {
                Ok(w)
            }
        })
        .collect()
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let core = |e: subgan_core::CoreError| format!("`{key}`: {e}");
        match key {
            "plan_id" => {
                if v.is_empty() || v.contains(['/', '\\']) {
                    return Err("`plan_id` must be a non-empty name without path separators".into());
                }
                self.plan_id = v.to_string();
            }
            "regime" => {
                self.regime = PlanRegime::parse(v)
                    .ok_or_else(|| format!("`regime`: expected standard, subproblem or equivalence-pair, got `{v}`"))?
            }
            "model" => {
                self.model = match v {
                    "mlp" => ModelKind::Mlp,
                    "toy" => ModelKind::Toy,
                    _ => return Err(format!("`model`: expected mlp or toy, got `{v}`")),
                }
            }
            "data" => self.data = v.parse().map_err(core)?,
            "noise" => self.noise = v.parse().map_err(core)?,
            "generator_hidden" => self.generator_hidden = parse_widths(key, v)?,
            "discriminator_hidden" => self.discriminator_hidden = parse_widths(key, v)?,
            "activation" => {
                self.activation =
                    Activation::parse(v).ok_or_else(|| format!("`activation`: expected tanh, relu or sigmoid, got `{v}`"))?
            }
            "delta1" => self.sub.delta1 = v.parse::<Discrepancy>().map_err(core)?,
            "lambda1" => self.sub.lambda1 = parse_rate(key, v)?,
            "n1" => self.sub.n1 = parse_count(key, v)?,
            "delta2" => self.sub.delta2 = v.parse::<Discrepancy>().map_err(core)?,
            "delta2_reduction" => self.sub.delta2_reduction = v.parse::<Reduction>().map_err(core)?,
            "lambda2" => self.sub.lambda2 = parse_rate(key, v)?,
            "n2" => self.sub.n2 = parse_count(key, v)?,
            "optimizer" => self.sub.optimizer = v.parse::<OptimizerKind>().map_err(core)?,
            "eta_f" => self.sub.eta_f = parse_rate(key, v)?,
            "eta_g" => self.sub.eta_g = parse_rate(key, v)?,
            "steps" => self.steps = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_count(key, v)?,
            "eval_every" => self.eval_every = parse_num(key, v)?,
            "eval_samples" => self.eval_samples = parse_count(key, v)?,
            "seeds" => {
                let seeds: Vec<u64> = v
                    .split(',')
                    .map(|t| parse_num(key, t.trim()))
                    .collect::<std::result::Result<_, _>>()?;
                if seeds.is_empty() {
                    return Err("`seeds` must list at least one seed".into());
                }
                if seeds.iter().enumerate().any(|(i, s)| seeds[..i].contains(s)) {
                    return Err("`seeds` must not repeat a seed".into());
                }
                self.seeds = seeds;
            }
            "output" => {
                if v.is_empty() {
                    return Err("`output` must not be empty".into());
                }
                self.output = PathBuf::from(v);
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Text form of one key, as `set` reads it.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.sub;
        Some(match key {
            "plan_id" => self.plan_id.clone(),
            "regime" => self.regime.name().into(),
            "model" => self.model.name().into(),
            "data" => self.data.to_string(),
            "noise" => self.noise.to_string(),
            "generator_hidden" => widths(&self.generator_hidden),
            "discriminator_hidden" => widths(&self.discriminator_hidden),
            "activation" => self.activation.name().into(),
            "delta1" => s.delta1.to_string(),
            "lambda1" => s.lambda1.to_string(),
            "n1" => s.n1.to_string(),
            "delta2" => s.delta2.to_string(),
            "delta2_reduction" => s.delta2_reduction.name().into(),
            "lambda2" => s.lambda2.to_string(),
            "n2" => s.n2.to_string(),
            "optimizer" => s.optimizer.to_string(),
            "eta_f" => s.eta_f.to_string(),
            "eta_g" => s.eta_g.to_string(),
            "steps" => self.steps.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_samples" => self.eval_samples.to_string(),
            "seeds" => join(&self.seeds),
            "output" => self.output.display().to_string(),
            _ => return None,
        })
    }

    /// Canonical file form; [`ConfigFile::parse`] reads it back to an equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("known key"));
        }
        out
    }

    /// Checks everything that does not depend on a particular seed.
    pub fn validate(&self) -> Result<()> {
        if self.regime == PlanRegime::EquivalencePair {
            self.sub.validate_equivalence()?;
        }
        self.validate_settings()
    }

    /// [`RunConfig::validate`] without the equivalence-mode constraints.
    pub fn validate_settings(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Invalid(m));
        self.sub.validate()?;
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.eval_samples <= self.data.dim() {
            return bad(format!(
                "eval_samples must exceed the data dimension ({})",
                self.data.dim()
            ));
        }
        if self.model == ModelKind::Toy && self.noise.dim() != self.data.dim() {
            return bad(format!(
                "the toy model needs noise and data of equal dimension, got {} and {}",
                self.noise.dim(),
                self.data.dim()
            ));
        }
        Ok(())
    }

    /// Loads a file, applies `overrides` (flag name, value) and returns the
    /// single configuration; lists are rejected here.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut file = ConfigFile::read(path)?;
        file.apply_overrides(overrides)?;
        let plan = file.resolve()?;
        if !plan.axes.is_empty() {
            let keys: Vec<&str> = plan.axes.iter().map(|a| a.key.as_str()).collect();
            return Err(HarnessError::Invalid(format!(
                "value lists for {} need the sweep command",
                keys.join(", ")
            )));
        }
        Ok(plan.base)
    }
}

fn widths(v: &[usize]) -> String {
    if v.is_empty() {
        "none".into()
    } else {
        join(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub values: Vec<String>,
    pub origin: Origin,
}

/// A parsed file before list expansion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub entries: Vec<Entry>,
}

/// One swept key and its alternatives, each already validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedFile {
    pub base: RunConfig,
    pub axes: Vec<Axis>,
}

impl ConfigFile {
    pub fn read(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        ConfigFile::parse(&path.display().to_string(), &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<ConfigFile> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File {
                path: name.to_string(),
                line: i + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::config(origin.clone(), format!("expected `key = value`, got `{line}`")))?;
            let key = k.trim();
            if !KEYS.contains(&key) {
                return Err(HarnessError::config(origin, format!("unknown key `{key}`")));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(HarnessError::config(origin, format!("`{key}` already set at {}", prev.origin)));
            }
            let values: Vec<String> = v.split('|').map(|s| s.trim().to_string()).collect();
            if values.len() > 1 && SCALAR_ONLY.contains(&key) {
                return Err(HarnessError::config(origin, format!("`{key}` cannot be swept")));
            }
            entries.push(Entry {
                key: key.to_string(),
                values,
                origin,
            });
        }
        Ok(ConfigFile { entries })
    }

    /// Flag values replace file values.
    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) -> Result<()> {
        for (key, value) in overrides {
            let origin = Origin::Flag(key.clone());
            if !KEYS.contains(&key.as_str()) {
                return Err(HarnessError::config(origin, "unknown key"));
            }
            let values: Vec<String> = value.split('|').map(|s| s.trim().to_string()).collect();
            if values.len() > 1 && SCALAR_ONLY.contains(&key.as_str()) {
                return Err(HarnessError::config(origin, format!("`{key}` cannot be swept")));
            }
            self.entries.retain(|e| e.key != *key);
            self.entries.push(Entry {
                key: key.clone(),
                values,
                origin,
            });
        }
        Ok(())
    }

    /// Builds the base configuration (first value of every key) and checks
    /// every listed alternative, reporting the line it came from.
    pub fn resolve(&self) -> Result<ResolvedFile> {
        let mut base = RunConfig::default();
        let mut axes = Vec::new();
        for e in &self.entries {
            for v in &e.values {
                let mut probe = base.clone();
                probe.set(&e.key, v).map_err(|m| HarnessError::config(e.origin.clone(), m))?;
            }
            base.set(&e.key, &e.values[0])
                .map_err(|m| HarnessError::config(e.origin.clone(), m))?;
            if e.values.len() > 1 {
                axes.push(Axis {
                    key: e.key.clone(),
                    values: e.values.clone(),
                });
            }
        }
        Ok(ResolvedFile { base, axes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut c = RunConfig::default();
        c.set("lambda2", &(2e-4 / 0.3).to_string()).unwrap();
        c.set("optimizer", "adam").unwrap();
        c.set("seeds", "3,1,4").unwrap();
        c.set("data", "ring radius=1.5 noise=0.1").unwrap();
        let back = ConfigFile::parse("x", &c.to_text()).unwrap().resolve().unwrap();
        assert_eq!(back.base, c);
        assert!(back.axes.is_empty());
    }

    #[test]
    fn diagnostics_name_the_line() {
        let err = ConfigFile::parse("plan.conf", "steps = 10\n\nlambda1 = fast\n")
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().starts_with("plan.conf:3:"), "{err}");
        let err = ConfigFile::parse("plan.conf", "# c\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().starts_with("plan.conf:2:"), "{err}");
        let err = ConfigFile::parse("p", "n1 = 1\nn1 = 2\n").unwrap_err();
        assert!(err.to_string().contains("already set at p:1"), "{err}");
    }

    #[test]
    fn lists_become_axes() {
        let f = ConfigFile::parse("p", "n1 = 1 | 2 | 3\ndelta2 = l1 | l2\n").unwrap();
        let r = f.resolve().unwrap();
        assert_eq!(r.axes.len(), 2);
        assert_eq!(r.base.sub.n1, 1);
        let err = ConfigFile::parse("p", "n1 = 1 | x\n").unwrap().resolve().unwrap_err();
        assert!(err.to_string().starts_with("p:1:"));
        assert!(ConfigFile::parse("p", "seeds = 1 | 2\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let mut f = ConfigFile::parse("p", "lambda1 = 0.5\n").unwrap();
        f.apply_overrides(&[("lambda1".into(), "0.25".into())]).unwrap();
        assert_eq!(f.resolve().unwrap().base.sub.lambda1, 0.25);
        let err = f.apply_overrides(&[("nope".into(), "1".into())]).unwrap_err();
        assert!(err.to_string().starts_with("--nope"));
    }

    #[test]
    fn equivalence_pair_demands_equivalence_mode() {
        let mut c = RunConfig::default();
        c.regime = PlanRegime::EquivalencePair;
        assert!(c.validate().is_ok());
        c.sub.n2 = 2;
        assert!(c.validate().is_err());
    }
}
