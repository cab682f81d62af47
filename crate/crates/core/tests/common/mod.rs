#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use subgan_core::{Activation, Model, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], normals(rng, rows * cols)).unwrap()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// `max|a − b| / max(max|a|, max|b|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub const FD_STEP: f64 = 1e-6;

/// Central differences of a scalar function.
pub fn fd_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function, row-major `[out, in]`.
pub fn fd_jacobian(x: &[f64], out: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let n = x.len();
    let mut jac = vec![0.0; out * n];
    let mut p = x.to_vec();
    for i in 0..n {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = f(&p);
        p[i] = orig - FD_STEP;
        let down = f(&p);
        p[i] = orig;
        for r in 0..out {
            jac[r * n + i] = (up[r] - down[r]) / (2.0 * FD_STEP);
        }
    }
    jac
}

pub fn mlp(dims: &[usize], act: Activation, seed: u64) -> Model {
    Model::mlp(dims, act).unwrap().with_init(seed)
}

/// Generator/discriminator pairs used wherever a test must cover several architectures.
pub fn architectures(seed: u64) -> Vec<(&'static str, Model, Model)> {
    vec![
        (
            "tanh-mlp",
            mlp(&[3, 8, 2], Activation::Tanh, seed),
            mlp(&[2, 8, 1], Activation::Tanh, seed ^ 1),
        ),
        (
            "relu-mlp",
            mlp(&[4, 16, 8, 3], Activation::Relu, seed),
            mlp(&[3, 12, 1], Activation::Relu, seed ^ 1),
        ),
        (
            "sigmoid-mlp",
            mlp(&[2, 6, 6, 2], Activation::Sigmoid, seed),
            mlp(&[2, 10, 1], Activation::Sigmoid, seed ^ 1),
        ),
        ("toy", toy_generator(2, seed), toy_discriminator(2, seed ^ 1)),
    ]
}

pub fn toy_generator(d: usize, seed: u64) -> Model {
    let mut r = rng(seed);
    subgan_core::ToyGenerator::new(d, normals(&mut r, d * (d + 1))).unwrap().to_model()
}

pub fn toy_discriminator(d: usize, seed: u64) -> Model {
    let mut r = rng(seed);
    subgan_core::ToyDiscriminator::new(normals(&mut r, d)).to_model()
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Affine stack evaluated with plain loops; parameters laid out `[out, in (+1)]`.
pub fn reference_forward(model: &Model, x: &[f64]) -> Vec<f64> {
    use subgan_core::LayerSpec;
    let mut h = x.to_vec();
    let mut pi = 0;
    for l in model.layers() {
        match *l {
            LayerSpec::Affine { fan_out, bias } => {
                let w = model.params()[pi].data();
                pi += 1;
                let cols = h.len() + usize::from(bias);
                let mut out = vec![0.0; fan_out];
                for (o, slot) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (k, hk) in h.iter().enumerate() {
                        s += w[o * cols + k] * hk;
                    }
                    if bias {
                        s += w[o * cols + h.len()];
                    }
                    *slot = s;
                }
                h = out;
            }
            LayerSpec::Activation(Activation::Tanh) => h.iter_mut().for_each(|v| *v = v.tanh()),
            LayerSpec::Activation(Activation::Sigmoid) => h.iter_mut().for_each(|v| *v = sigmoid(*v)),
            LayerSpec::Activation(Activation::Relu) => h.iter_mut().for_each(|v| *v = v.max(0.0)),
        }
    }
    h
}
