//! Layer stacks for generators and discriminators.
//!
//! Every affine layer owns a single parameter tensor of shape
//! `[fan_out, fan_in + 1]` (bias in the last column) or `[fan_out, fan_in]`
//! when it has no bias. The flattened parameter vector is the concatenation
//! of these tensors in layer order, row-major.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{ComputationRecord, Var};
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Affine { fan_out: usize, bias: bool },
    Activation(Activation),
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Affine { fan_out, bias } => {
                write!(f, "affine:{}:{}", fan_out, if *bias { "bias" } else { "nobias" })
            }
            LayerSpec::Activation(a) => f.write_str(a.name()),
        }
    }
}

/// Whether a model's parameters take part in differentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamMode {
    Trainable,
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    params: Vec<Tensor>,
}

impl Model {
    /// Builds a model with all parameters zero.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_dim == 0 {
            return Err(CoreError::Architecture("input dimension must be positive".into()));
        }
        let mut width = input_dim;
        let mut params = Vec::new();
        for l in &layers {
            if let LayerSpec::Affine { fan_out, bias } = *l {
                if fan_out == 0 {
                    return Err(CoreError::Architecture("affine layer with zero outputs".into()));
                }
                params.push(Tensor::zeros(vec![fan_out, width + usize::from(bias)]));
                width = fan_out;
            }
        }
        if params.is_empty() {
            return Err(CoreError::Architecture("model has no affine layer".into()));
        }
        Ok(Model {
            input_dim,
            layers,
            params,
        })
    }

    /// Fully connected stack `dims[0] → … → dims[last]`, `hidden` activation
    /// between affine layers, biased everywhere, no output activation.
    pub fn mlp(dims: &[usize], hidden: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(CoreError::Architecture("mlp needs at least two sizes".into()));
        }
        let mut layers = Vec::new();
        for (i, &d) in dims[1..].iter().enumerate() {
            if i > 0 {
                layers.push(LayerSpec::Activation(hidden));
            }
            layers.push(LayerSpec::Affine { fan_out: d, bias: true });
        }
        Model::new(dims[0], layers)
    }

    /// Weights ~ N(0, 1/fan_in), biases 0.
    pub fn init_normal(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut li = 0;
        let mut width = self.input_dim;
        for l in &self.layers {
            if let LayerSpec::Affine { fan_out, bias } = *l {
                let normal = Normal::new(0.0, libm::sqrt(1.0 / width as f64)).expect("positive std");
                let cols = width + usize::from(bias);
                let data = self.params[li].data_mut();
                for o in 0..fan_out {
                    for k in 0..width {
                        data[o * cols + k] = normal.sample(&mut rng);
                    }
                    if bias {
                        data[o * cols + width] = 0.0;
                    }
                }
                li += 1;
                width = fan_out;
            }
        }
    }

    pub fn with_init(mut self, seed: u64) -> Self {
        self.init_normal(seed);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Affine { fan_out, .. } => Some(*fan_out),
                _ => None,
            })
            .unwrap_or(self.input_dim)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for p in &self.params {
            v.extend_from_slice(p.data());
        }
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(CoreError::ParamCount {
                expected: self.param_count(),
                found: flat.len(),
            });
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.len();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Records the model on `rec`, applied to `x` (`[batch, input_dim]`).
    /// Returns the output node and the parameter leaves in flattened order.
    pub fn apply(&self, rec: &mut ComputationRecord, x: Var, mode: ParamMode) -> Result<(Var, Vec<Var>)> {
        let xs = rec.value(x).shape();
        if xs.len() != 2 || xs[1] != self.input_dim {
            return Err(CoreError::Layer {
                index: 0,
                layer: "input".to_string(),
                source: alloc::boxed::Box::new(CoreError::shape(
                    "model input",
                    &[xs.first().copied().unwrap_or(0), self.input_dim],
                    xs,
                )),
            });
        }
        let mut h = x;
        let mut pvars = Vec::with_capacity(self.params.len());
        let mut pi = 0;
        for (index, l) in self.layers.iter().enumerate() {
            h = match *l {
                LayerSpec::Affine { bias, .. } => {
                    let p = self.params[pi].detached().with_requires_grad(mode == ParamMode::Trainable);
                    pi += 1;
                    let w = rec.leaf(p);
                    pvars.push(w);
                    rec.affine(h, w, bias).map_err(|e| CoreError::Layer {
                        index,
                        layer: l.to_string(),
                        source: alloc::boxed::Box::new(e),
                    })?
                }
                LayerSpec::Activation(Activation::Sigmoid) => rec.sigmoid(h),
                LayerSpec::Activation(Activation::Tanh) => rec.tanh(h),
                LayerSpec::Activation(Activation::Relu) => rec.relu(h),
            };
        }
        Ok((h, pvars))
    }

    /// Forward evaluation without gradient tracking.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut rec = ComputationRecord::new();
        let xv = rec.constant(x.detached());
        let (out, _) = self.apply(&mut rec, xv, ParamMode::Frozen)?;
        Ok(rec.value(out).clone())
    }

    /// One-line architecture descriptor, e.g. `mlp in=2 affine:16:bias tanh affine:2:bias`.
    pub fn descriptor(&self) -> String {
        let mut s = format!("mlp in={}", self.input_dim);
        for l in &self.layers {
            s.push(' ');
            s.push_str(&l.to_string());
        }
        s
    }

    /// Parses [`Model::descriptor`] output into a zero-initialised model.
    pub fn from_descriptor(line: &str) -> Result<Self> {
        let bad = |m: &str| CoreError::Architecture(format!("{m}: `{line}`"));
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some("mlp") {
            return Err(bad("descriptor must start with `mlp`"));
        }
        let input_dim = tokens
            .next()
            .and_then(|t| t.strip_prefix("in="))
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing `in=<dim>`"))?;
        let mut layers = Vec::new();
        for t in tokens {
            if let Some(a) = Activation::parse(t) {
                layers.push(LayerSpec::Activation(a));
                continue;
            }
            let mut parts = t.split(':');
            match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some("affine"), Some(n), Some(b), None) => {
                    let fan_out = n.parse().map_err(|_| bad("bad affine width"))?;
                    let bias = match b {
                        "bias" => true,
                        "nobias" => false,
                        _ => return Err(bad("affine bias flag must be bias|nobias")),
                    };
                    layers.push(LayerSpec::Affine { fan_out, bias });
                }
                _ => return Err(bad("unknown layer token")),
            }
        }
        Model::new(input_dim, layers)
    }
}

/// Linear generator `x = B z̃` with `z̃ = [z; 1]`, `B ∈ ℝ^{d×(d+1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGenerator {
    dim: usize,
    b: Vec<f64>,
}

impl ToyGenerator {
    pub fn new(dim: usize, b: Vec<f64>) -> Result<Self> {
        if b.len() != dim * (dim + 1) {
            return Err(CoreError::ParamCount {
                expected: dim * (dim + 1),
                found: b.len(),
            });
        }
        Ok(ToyGenerator { dim, b })
    }

    /// `B = [I | 0]`: the identity map on `z`.
    pub fn identity(dim: usize) -> Self {
        let mut b = vec![0.0; dim * (dim + 1)];
        for i in 0..dim {
            b[i * (dim + 1) + i] = 1.0;
        }
        ToyGenerator { dim, b }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `B`.
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn output(&self, z: &[f64]) -> Vec<f64> {
        let c = self.dim + 1;
        (0..self.dim)
            .map(|i| {
                let r = &self.b[i * c..(i + 1) * c];
                r[..self.dim].iter().zip(z).fold(r[self.dim], |acc, (a, b)| acc + a * b)
            })
            .collect()
    }

    pub fn to_model(&self) -> Model {
        let mut m = Model::new(self.dim, vec![LayerSpec::Affine { fan_out: self.dim, bias: true }])
            .expect("valid toy architecture");
        m.set_flat_params(&self.b).expect("matching length");
        m
    }

    pub fn from_model(model: &Model) -> Result<Self> {
        let d = model.input_dim();
        if model.layers() != [LayerSpec::Affine { fan_out: d, bias: true }] {
            return Err(CoreError::Architecture(format!("not a toy generator: {}", model.descriptor())));
        }
        ToyGenerator::new(d, model.flat_params())
    }
}

/// Logistic discriminator `f(x) = σ(wᵀx)`; as a [`Model`] it emits the logit `wᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDiscriminator {
    w: Vec<f64>,
}

impl ToyDiscriminator {
    pub fn new(w: Vec<f64>) -> Self {
        ToyDiscriminator { w }
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        crate::autodiff::sigmoid(self.logit(x))
    }

    pub fn to_model(&self) -> Model {
        let mut m = Model::new(self.w.len(), vec![LayerSpec::Affine { fan_out: 1, bias: false }])
            .expect("valid toy architecture");
        m.set_flat_params(&self.w).expect("matching length");
        m
    }

    pub fn from_model(model: &Model) -> Result<Self> {
        if model.layers() != [LayerSpec::Affine { fan_out: 1, bias: false }] {
            return Err(CoreError::Architecture(format!("not a toy discriminator: {}", model.descriptor())));
        }
        Ok(ToyDiscriminator::new(model.flat_params()))
    }
}
