use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subgan::config::{ConfigFile, RunConfig};
use subgan::error::{exit, HarnessError, Result};
use subgan::plan::{ExperimentPlan, Template};
use subgan::{analyze, compare, plot, runner, sweep};
use subgan_core::trainer::SubproblemConfig;
use subgan_core::ToyGenerator;

#[derive(Parser)]
#[command(name = "subgan", version, about = "GAN training as label inversion plus regression: runs, sweeps, comparisons and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration for every listed seed.
    Run(ConfigArgs),
    /// Run a plan template over every seed, with the standard baseline added.
    Sweep {
        #[arg(long, value_parser = parse_template)]
        template: Template,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Step standard and subproblem training in lockstep and report their divergence.
    Compare {
        /// Run even outside equivalence mode, as an expected failure.
        #[arg(long)]
        allow_mismatch: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-render every plot under a directory from its CSVs.
    Plot { dir: PathBuf },
    /// Diagnostics that do not need a training run.
    #[command(subcommand)]
    Analyze(Analysis),
}

#[derive(Subcommand)]
enum Analysis {
    /// Kernel K = J Jᵀ at standard normal noise draws.
    Kernel {
        #[arg(long, default_value = "toy")]
        model: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value = "32,32")]
        hidden: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "analysis/kernel")]
        out: PathBuf,
    },
    /// Residual of the first-order output prediction against the step size.
    Taylor {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value = "16,16")]
        hidden: String,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "analysis/taylor")]
        out: PathBuf,
    },
    /// Linear generator against a logistic discriminator on a Gaussian target.
    Toy {
        #[arg(long, default_value = "3,-2")]
        mean: String,
        /// Row-major covariance; a list of d values is read as the diagonal.
        #[arg(long, default_value = "4,0.25")]
        cov: String,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        #[arg(long, default_value = "analysis/toy")]
        out: PathBuf,
    },
    /// Self-distance of the data distribution against sample size.
    Floor {
        #[arg(long, default_value = "64,128,256,512,1024,2048,4096")]
        sizes: String,
        #[arg(long, default_value = "analysis/floor")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// A configuration file plus per-key overrides named after the file keys.
#[derive(Args, Default)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "plan_id")]
    plan_id: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long = "generator_hidden")]
    generator_hidden: Option<String>,
    #[arg(long = "discriminator_hidden")]
    discriminator_hidden: Option<String>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    delta1: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    n1: Option<String>,
    #[arg(long)]
    delta2: Option<String>,
    #[arg(long = "delta2_reduction")]
    delta2_reduction: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    n2: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long = "eta_f")]
    eta_f: Option<String>,
    #[arg(long = "eta_g")]
    eta_g: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long = "batch_size")]
    batch_size: Option<String>,
    #[arg(long = "eval_every")]
    eval_every: Option<String>,
    #[arg(long = "eval_samples")]
    eval_samples: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    output: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let pairs = [
            ("plan_id", &self.plan_id),
            ("regime", &self.regime),
            ("model", &self.model),
            ("data", &self.data),
            ("noise", &self.noise),
            ("generator_hidden", &self.generator_hidden),
            ("discriminator_hidden", &self.discriminator_hidden),
            ("activation", &self.activation),
            ("delta1", &self.delta1),
            ("lambda1", &self.lambda1),
            ("n1", &self.n1),
            ("delta2", &self.delta2),
            ("delta2_reduction", &self.delta2_reduction),
            ("lambda2", &self.lambda2),
            ("n2", &self.n2),
            ("optimizer", &self.optimizer),
            ("eta_f", &self.eta_f),
            ("eta_g", &self.eta_g),
            ("steps", &self.steps),
            ("batch_size", &self.batch_size),
            ("eval_every", &self.eval_every),
            ("eval_samples", &self.eval_samples),
            ("seeds", &self.seeds),
            ("output", &self.output),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }

    fn file(&self) -> Result<ConfigFile> {
        let mut file = match &self.config {
            Some(p) => ConfigFile::read(p)?,
            None => ConfigFile::default(),
        };
        file.apply_overrides(&self.overrides())?;
        Ok(file)
    }

    fn single(&self) -> Result<RunConfig> {
        let r = self.file()?.resolve()?;
        if !r.axes.is_empty() {
            let keys: Vec<&str> = r.axes.iter().map(|a| a.key.as_str()).collect();
            return Err(HarnessError::Invalid(format!("value lists for {} need the sweep command", keys.join(", "))));
        }
        Ok(r.base)
    }
}

fn parse_template(s: &str) -> std::result::Result<Template, String> {
    Template::parse(s).ok_or_else(|| format!("expected factorial, rate-sweep or grid, got `{s}`"))
}

fn list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| HarnessError::Invalid(format!("{what}: cannot read `{t}`"))))
        .collect()
}

fn report_plots(r: &plot::PlotReport, dir: &Path) {
    if r.written.is_empty() && r.missing.is_empty() {
        eprintln!("warning: nothing to plot under {}", dir.display());
    }
    for m in &r.missing {
        eprintln!("missing: {}", m.display());
    }
    println!("{} plots written", r.written.len());
}

fn exec(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.single()?;
            let Some(regime) = cfg.regime.single() else {
                return exec_compare(&cfg, false);
            };
            let outs = sweep::run_seeds(&cfg, regime)?;
            let mut code = exit::OK;
            for o in &outs {
                match &o.halted {
                    None => println!("{}: completed {} steps", o.dir.display(), o.steps_completed),
                    Some(m) => {
                        println!("{}: {m}", o.dir.display());
                        code = exit::DIVERGED;
                    }
                }
            }
            Ok(code)
        }
        Command::Sweep { template, config } => {
            let resolved = config.file()?.resolve()?;
            let plan = ExperimentPlan::new(template, &resolved)?;
            let out = sweep::run_sweep(&plan)?;
            println!(
                "{} runs over {} conditions in {}",
                out.runs.len(),
                plan.conditions.len(),
                plan.base.output.display()
            );
            for t in out.tracking.iter().filter(|t| !t.verdict.pass()) {
                println!("{} seed {}: left the baseline trajectory at step {:?}", t.condition, t.seed, t.verdict.first_violation);
            }
            Ok(if !out.tracking_ok() {
                exit::NOT_EQUIVALENT
            } else if out.diverged() {
                exit::DIVERGED
            } else {
                exit::OK
            })
        }
        Command::Compare { allow_mismatch, config } => exec_compare(&config.single()?, allow_mismatch),
        Command::Plot { dir } => {
            let r = plot::emit_plots(&dir)?;
            report_plots(&r, &dir);
            Ok(exit::OK)
        }
        Command::Analyze(a) => analyze_cmd(a).map(|()| exit::OK),
    }
}

fn exec_compare(cfg: &RunConfig, allow_mismatch: bool) -> Result<i32> {
    let out = compare::compare_equivalence(cfg, allow_mismatch)?;
    for (seed, v) in &out.verdicts {
        println!(
            "seed {seed}: max divergence {:e} at step {} ({})",
            v.max,
            v.worst_step,
            if v.pass() { "pass" } else { "FAIL" }
        );
    }
    if !out.violations.is_empty() {
        println!("expected to fail: {}", out.violations.join("; "));
    }
    Ok(if !out.pass() {
        exit::NOT_EQUIVALENT
    } else if out.diverged {
        exit::DIVERGED
    } else {
        exit::OK
    })
}

fn analyze_cmd(a: Analysis) -> Result<()> {
    match a {
        Analysis::Kernel { model, dim, hidden, samples, seed, out } => {
            let g = match model.as_str() {
                "toy" => ToyGenerator::identity(dim).to_model(),
                "mlp" => {
                    let mut cfg = RunConfig::default();
                    cfg.set("noise", &format!("standard_normal dim={dim}")).map_err(HarnessError::Invalid)?;
                    cfg.set("data", &format!("standard_normal dim={dim}")).map_err(HarnessError::Invalid)?;
                    cfg.set("generator_hidden", &hidden).map_err(HarnessError::Invalid)?;
                    runner::build_models(&cfg, seed)?.0
                }
                other => return Err(HarnessError::Invalid(format!("--model: expected toy or mlp, got `{other}`"))),
            };
            let s = analyze::kernel(&out, &g, samples, seed)?;
            println!(
                "trace/d = {} ± {} over {} draws{}",
                s.trace_over_d_mean,
                s.trace_over_d_stderr,
                s.samples,
                s.expected.map(|e| format!(" (expected {e})")).unwrap_or_default()
            );
        }
        Analysis::Taylor { dim, hidden, eta, count, seed, out } => {
            let rows = analyze::taylor(&out, &list::<usize>("--hidden", &hidden)?, dim, &analyze::halving(eta, count), seed)?;
            for r in rows {
                println!("{:<9} eta {:<12e} residual {:<12e} order {}", r.model, r.eta, r.residual, r.order.map(|o| format!("{o:.3}")).unwrap_or_default());
            }
        }
        Analysis::Toy { mean, cov, steps, batch, eta, seeds, out } => {
            let mu: Vec<f64> = list("--mean", &mean)?;
            let c: Vec<f64> = list("--cov", &cov)?;
            let d = mu.len();
            let sigma = if c.len() == d {
                let mut m = vec![0.0; d * d];
                for (i, v) in c.iter().enumerate() {
                    m[i * d + i] = *v;
                }
                m
            } else {
                c
            };
            let sub = SubproblemConfig::equivalent(1.0, eta, eta);
            let rows = analyze::toy(&out, &mu, &sigma, &sub, steps, batch, &list::<u64>("--seeds", &seeds)?)?;
            for r in rows {
                println!("seed {}: mean error {:.4}, covariance error {:.4}", r.seed, r.mean_error, r.covariance_error);
            }
        }
        Analysis::Floor { sizes, out, config } => {
            let cfg = config.single()?;
            let seeds = cfg.seeds.clone();
            for (n, m, e) in analyze::floor(&out, &cfg.data, &list::<usize>("--sizes", &sizes)?, &seeds)? {
                println!("n = {n}: {m} ± {}", e.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match exec(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            exit::CONFIG
        }
    };
    ExitCode::from(code as u8)
}
