//! Seeded synthetic distributions for data `p(X)` and noise `p(Z)`.
//!
//! Text form (used by run configs):
//!
//! ```text
//! gaussian mean=3,-2 cov=4,0,0,0.25
//! gaussian mean=0,0 diag=1,1
//! standard_normal dim=2
//! mixture weights=0.5,0.5 means=-2,0;2,0 std=0.1
//! circle_mixture k=8 radius=2 std=0.05
//! ring radius=1 noise=0.05
//! uniform dim=2
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::tensor::Tensor;
use crate::trainer::BatchSource;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: Vec<f64>,
    chol: Vec<f64>,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return Err(CoreError::Distribution(format!(
                "covariance must be {d}x{d}, got {} entries",
                cov.len()
            )));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (cov[i * d + j], cov[j * d + i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(CoreError::Distribution("covariance is not symmetric".into()));
                }
            }
        }
        let chol = linalg::cholesky(d, &cov)
            .ok_or_else(|| CoreError::Distribution("covariance is not positive definite".into()))?;
        Ok(Gaussian { mean, cov, chol })
    }

    pub fn standard(d: usize) -> Self {
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = 1.0;
        }
        Gaussian::new(vec![0.0; d], cov).expect("identity is positive definite")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        let d = self.dim();
        let e: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for i in 0..d {
            let l = &self.chol[i * d..i * d + i + 1];
            out.push(self.mean[i] + l.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    Gaussian(Gaussian),
    Mixture { weights: Vec<f64>, components: Vec<Gaussian> },
    /// Points on a circle of `radius` (2-D) plus isotropic Gaussian noise.
    Ring { radius: f64, noise_std: f64 },
    UniformHypercube { dim: usize },
}

impl DistributionSpec {
    pub fn gaussian(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        Ok(DistributionSpec::Gaussian(Gaussian::new(mean, cov)?))
    }

    pub fn standard_normal(dim: usize) -> Self {
        DistributionSpec::Gaussian(Gaussian::standard(dim))
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(CoreError::Distribution("one weight per component required".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(CoreError::Distribution("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CoreError::Distribution(format!("mixture weights sum to {total}, not 1")));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(CoreError::Distribution("mixture components differ in dimension".into()));
        }
        Ok(DistributionSpec::Mixture { weights, components })
    }

    /// `k` equally weighted isotropic components evenly spaced on a circle.
    pub fn circle_mixture(k: usize, radius: f64, std: f64) -> Result<Self> {
        if k == 0 || !(std > 0.0) {
            return Err(CoreError::Distribution("circle mixture needs k ≥ 1 and std > 0".into()));
        }
        let comps = (0..k)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / k as f64;
                Gaussian::new(
                    vec![radius * libm::cos(a), radius * libm::sin(a)],
                    vec![std * std, 0.0, 0.0, std * std],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        DistributionSpec::mixture(vec![1.0 / k as f64; k], comps)
    }

    pub fn ring(radius: f64, noise_std: f64) -> Result<Self> {
        if !(radius >= 0.0 && noise_std >= 0.0) {
            return Err(CoreError::Distribution("ring radius and noise must be nonnegative".into()));
        }
        Ok(DistributionSpec::Ring { radius, noise_std })
    }

    pub fn uniform_hypercube(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::Distribution("dimension must be positive".into()));
        }
        Ok(DistributionSpec::UniformHypercube { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::Gaussian(g) => g.dim(),
            DistributionSpec::Mixture { components, .. } => components[0].dim(),
            DistributionSpec::Ring { .. } => 2,
            DistributionSpec::UniformHypercube { dim } => *dim,
        }
    }

    /// True mean.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            DistributionSpec::Gaussian(g) => g.mean.clone(),
            DistributionSpec::Mixture { weights, components } => {
                let mut m = vec![0.0; self.dim()];
                for (w, c) in weights.iter().zip(components) {
                    m.iter_mut().zip(&c.mean).for_each(|(a, b)| *a += w * b);
                }
                m
            }
            DistributionSpec::Ring { .. } => vec![0.0; 2],
            DistributionSpec::UniformHypercube { dim } => vec![0.5; *dim],
        }
    }

    /// True covariance, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let diag = |v: f64| {
            let mut c = vec![0.0; d * d];
            for i in 0..d {
                c[i * d + i] = v;
            }
            c
        };
        match self {
            DistributionSpec::Gaussian(g) => g.cov.clone(),
            DistributionSpec::Mixture { weights, components } => {
                let m = self.mean();
                let mut c = vec![0.0; d * d];
                for (w, comp) in weights.iter().zip(components) {
                    for i in 0..d {
                        for j in 0..d {
                            c[i * d + j] += w * (comp.cov[i * d + j] + comp.mean[i] * comp.mean[j]);
                        }
                    }
                }
                for i in 0..d {
                    for j in 0..d {
                        c[i * d + j] -= m[i] * m[j];
                    }
                }
                c
            }
            DistributionSpec::Ring { radius, noise_std } => diag(radius * radius / 2.0 + noise_std * noise_std),
            DistributionSpec::UniformHypercube { .. } => diag(1.0 / 12.0),
        }
    }
}

fn join(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    parts.join(",")
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionSpec::Gaussian(g) => write!(f, "gaussian mean={} cov={}", join(&g.mean), join(&g.cov)),
            DistributionSpec::Mixture { weights, components } => {
                write!(f, "mixture weights={} means=", join(weights))?;
                let means: Vec<String> = components.iter().map(|c| join(&c.mean)).collect();
                write!(f, "{} covs=", means.join(";"))?;
                let covs: Vec<String> = components.iter().map(|c| join(&c.cov)).collect();
                f.write_str(&covs.join(";"))
            }
            DistributionSpec::Ring { radius, noise_std } => write!(f, "ring radius={radius} noise={noise_std}"),
            DistributionSpec::UniformHypercube { dim } => write!(f, "uniform dim={dim}"),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::Distribution(format!("`{t}` is not a number")))
        })
        .collect()
}

fn diag_matrix(diag: &[f64]) -> Vec<f64> {
    let d = diag.len();
    let mut c = vec![0.0; d * d];
    for (i, v) in diag.iter().enumerate() {
        c[i * d + i] = *v;
    }
    c
}

impl FromStr for DistributionSpec {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let kind = tokens
            .next()
            .ok_or_else(|| CoreError::Distribution("empty distribution".into()))?;
        let mut kv: Vec<(&str, &str)> = Vec::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| CoreError::Distribution(format!("expected key=value, got `{t}`")))?;
            kv.push((k, v));
        }
        let get = |key: &str| -> Result<&str> {
            kv.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| CoreError::Distribution(format!("{kind}: missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| CoreError::Distribution(format!("{kind}: `{key}` is not a number")))
        };
        let count = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| CoreError::Distribution(format!("{kind}: `{key}` is not a count")))
        };
        match kind {
            "gaussian" => {
                let mean = parse_list(get("mean")?)?;
                let cov = match get("cov") {
                    Ok(c) => parse_list(c)?,
                    Err(_) => diag_matrix(&parse_list(get("diag")?)?),
                };
                DistributionSpec::gaussian(mean, cov)
            }
            "standard_normal" => Ok(DistributionSpec::standard_normal(count("dim")?)),
            "uniform" => DistributionSpec::uniform_hypercube(count("dim")?),
            "ring" => DistributionSpec::ring(num("radius")?, num("noise")?),
            "circle_mixture" => DistributionSpec::circle_mixture(count("k")?, num("radius")?, num("std")?),
            "mixture" => {
                let weights = parse_list(get("weights")?)?;
                let means: Vec<Vec<f64>> = get("means")?.split(';').map(parse_list).collect::<Result<_>>()?;
                let covs: Vec<Vec<f64>> = match get("covs") {
                    Ok(c) => c.split(';').map(parse_list).collect::<Result<_>>()?,
                    Err(_) => {
                        let s = num("std")?;
                        means.iter().map(|m| diag_matrix(&vec![s * s; m.len()])).collect()
                    }
                };
                if covs.len() != means.len() {
                    return Err(CoreError::Distribution("one covariance per mean required".into()));
                }
                let comps = means
                    .into_iter()
                    .zip(covs)
                    .map(|(m, c)| Gaussian::new(m, c))
                    .collect::<Result<Vec<_>>>()?;
                DistributionSpec::mixture(weights, comps)
            }
            other => Err(CoreError::Distribution(format!("unknown distribution `{other}`"))),
        }
    }
}

/// Stateful sampler. Mixture component choices come from a separate ChaCha
/// stream, so a mixture with weights `(1, 0, …)` draws exactly what its
/// first component alone would.
#[derive(Debug, Clone)]
pub struct DistributionSampler {
    spec: DistributionSpec,
    main: ChaCha8Rng,
    select: ChaCha8Rng,
}

impl DistributionSampler {
    pub fn new(spec: DistributionSpec, seed: u64) -> Self {
        let main = ChaCha8Rng::seed_from_u64(seed);
        let mut select = ChaCha8Rng::seed_from_u64(seed);
        select.set_stream(1);
        DistributionSampler { spec, main, select }
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn draw_batch(&mut self, n: usize) -> Tensor {
        let d = self.spec.dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            match &self.spec {
                DistributionSpec::Gaussian(g) => g.sample_into(&mut self.main, &mut data),
                DistributionSpec::Mixture { weights, components } => {
                    let u: f64 = self.select.random();
                    let mut acc = 0.0;
                    let mut pick = components.len() - 1;
                    for (k, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    components[pick].sample_into(&mut self.main, &mut data);
                }
                DistributionSpec::Ring { radius, noise_std } => {
                    let a = 2.0 * PI * self.main.random::<f64>();
                    let e0: f64 = StandardNormal.sample(&mut self.main);
                    let e1: f64 = StandardNormal.sample(&mut self.main);
                    data.push(radius * libm::cos(a) + noise_std * e0);
                    data.push(radius * libm::sin(a) + noise_std * e1);
                }
                DistributionSpec::UniformHypercube { dim } => {
                    for _ in 0..*dim {
                        data.push(self.main.random::<f64>());
                    }
                }
            }
        }
        Tensor::new(vec![n, d], data).expect("n×d samples")
    }
}

impl BatchSource for DistributionSampler {
    fn draw(&mut self, n: usize) -> Tensor {
        self.draw_batch(n)
    }
}

/// Seed for the noise stream paired with a data stream seeded by `seed`.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// `n` samples from `spec`, deterministic in `(spec, seed)`.
pub fn sample(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Tensor> {
    if n == 0 {
        return Err(CoreError::Distribution("sample count must be at least 1".into()));
    }
    Ok(DistributionSampler::new(spec.clone(), seed).draw_batch(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_specs() {
        assert!(DistributionSpec::gaussian(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(DistributionSpec::gaussian(vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(DistributionSpec::gaussian(vec![0.0], vec![1.0, 0.0]).is_err());
        let g = Gaussian::standard(2);
        assert!(DistributionSpec::mixture(vec![0.5, 0.6], vec![g.clone(), g.clone()]).is_err());
        assert!(DistributionSpec::mixture(vec![0.5, 0.5], vec![g.clone(), Gaussian::standard(3)]).is_err());
        assert!(sample(&DistributionSpec::standard_normal(2), 0, 1).is_err());
    }

    #[test]
    fn degenerate_mixture_matches_first_component() {
        let a = Gaussian::new(vec![1.0, -1.0], vec![0.5, 0.1, 0.1, 0.3]).unwrap();
        let b = Gaussian::new(vec![9.0, 9.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mix = DistributionSpec::mixture(vec![1.0, 0.0], vec![a.clone(), b]).unwrap();
        let lhs = sample(&mix, 500, 11).unwrap();
        let rhs = sample(&DistributionSpec::Gaussian(a), 500, 11).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn text_form_round_trips() {
        for s in [
            "gaussian mean=3,-2 cov=4,0,0,0.25",
            "ring radius=1 noise=0.05",
            "uniform dim=3",
            "mixture weights=0.25,0.75 means=0,0;1,1 covs=1,0,0,1;2,0,0,2",
        ] {
            let spec: DistributionSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        let d: DistributionSpec = "gaussian mean=0,1 diag=2,3".parse().unwrap();
        assert_eq!(d.covariance(), vec![2.0, 0.0, 0.0, 3.0]);
        let c: DistributionSpec = "circle_mixture k=8 radius=2 std=0.05".parse().unwrap();
        assert_eq!(c.dim(), 2);
        assert!("banana k=3".parse::<DistributionSpec>().is_err());
    }

    #[test]
    fn mixture_moments() {
        let a = Gaussian::new(vec![-1.0], vec![1.0]).unwrap();
        let b = Gaussian::new(vec![1.0], vec![1.0]).unwrap();
        let m = DistributionSpec::mixture(vec![0.5, 0.5], vec![a, b]).unwrap();
        assert_eq!(m.mean(), vec![0.0]);
        assert_eq!(m.covariance(), vec![2.0]);
    }
}
