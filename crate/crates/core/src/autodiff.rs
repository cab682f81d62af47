//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`ComputationRecord`] is a Wengert list: every primitive appends one
//! node holding its forward value, so node order is already topological.
//! [`ComputationRecord::backward`] walks the list in reverse and accumulates
//! gradients into every leaf that was created with `requires_grad`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::{Model, ParamMode};
use crate::tensor::Tensor;

/// Handle to a node of a [`ComputationRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `x · Wᵀ (+ bias column)`; `w` is `[out, in]` or `[out, in + 1]` with the bias last.
    Affine { x: usize, w: usize, bias: bool },
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    SquaredNorm(usize),
    AbsSum(usize),
    Log(usize),
    Sum(usize),
    Mean(usize),
    /// Elementwise `softplus(v) − y·v`, the fused BCE of `σ(v)` against `y`.
    BceLogits { logits: usize, labels: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct ComputationRecord {
    nodes: Vec<Node>,
    single_use: bool,
    consumed: bool,
    input: Option<Var>,
    params: Vec<Var>,
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(v: f64) -> f64 {
    v.max(0.0) + libm::log1p(libm::exp(-v.abs()))
}

impl ComputationRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// A record that refuses a second backward pass.
    pub fn single_use() -> Self {
        ComputationRecord {
            single_use: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf. Its gradient slot is filled by backward iff the
    /// tensor has `requires_grad` set.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(Op::Leaf, tensor)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.push(Op::Leaf, tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, `None` if nothing reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn output(&self) -> Option<Var> {
        self.nodes.len().checked_sub(1).map(Var)
    }

    pub fn input(&self) -> Option<Var> {
        self.input
    }

    pub fn parameters(&self) -> &[Var] {
        &self.params
    }

    pub(crate) fn set_input(&mut self, v: Var) {
        self.input = Some(v);
    }

    pub(crate) fn set_parameters(&mut self, vars: Vec<Var>) {
        self.params = vars;
    }

    /// Concatenated gradients of `vars`, zeros where none arrived.
    pub fn grads_flat(&self, vars: &[Var]) -> Vec<f64> {
        let mut out = Vec::new();
        for &v in vars {
            match self.grad(v) {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(core::iter::repeat(0.0).take(self.value(v).len())),
            }
        }
        out
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].value.requires_grad())
    }

    fn derived(&mut self, op: Op, inputs: &[usize], shape: Vec<usize>, data: Vec<f64>) -> Var {
        let rg = self.needs_grad(inputs);
        let t = Tensor::new(shape, data)
            .expect("primitive produced inconsistent shape")
            .with_requires_grad(rg);
        self.push(op, t)
    }

    pub fn affine(&mut self, x: Var, w: Var, bias: bool) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 {
            return Err(CoreError::shape("affine", &[0, 0], if xs.len() != 2 { &xs } else { &ws }));
        }
        let (batch, fan_in) = (xs[0], xs[1]);
        let fan_out = ws[0];
        let cols = fan_in + usize::from(bias);
        if ws[1] != cols {
            return Err(CoreError::shape("affine", &[fan_out, cols], &ws));
        }
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; batch * fan_out];
        for b in 0..batch {
            let xr = &xd[b * fan_in..(b + 1) * fan_in];
            for o in 0..fan_out {
                let wr = &wd[o * cols..(o + 1) * cols];
                let mut acc = if bias { wr[fan_in] } else { 0.0 };
                for i in 0..fan_in {
                    acc += wr[i] * xr[i];
                }
                out[b * fan_out + o] = acc;
            }
        }
        Ok(self.derived(
            Op::Affine { x: x.0, w: w.0, bias },
            &[x.0, w.0],
            vec![batch, fan_out],
            out,
        ))
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a);
        let shape = t.shape().to_vec();
        let data = t.data().iter().map(|&v| f(v)).collect();
        self.derived(op, &[a.0], shape, data)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid(a.0), a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh(a.0), a, libm::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu(a.0), a, |v| v.max(0.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Op::Log(a.0), a, libm::log)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(Op::Scale(a.0, c), a, |v| c * v)
    }

    fn binary(&mut self, op: Op, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(CoreError::shape(name, ta.shape(), tb.shape()));
        }
        let shape = ta.shape().to_vec();
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.derived(op, &[a.0, b.0], shape, data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Add(a.0, b.0), "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Sub(a.0, b.0), "sub", a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Mul(a.0, b.0), "mul", a, b, |x, y| x * y)
    }

    fn reduce(&mut self, op: Op, a: Var, f: impl Fn(&[f64]) -> f64) -> Var {
        let v = f(self.value(a).data());
        self.derived(op, &[a.0], Vec::new(), vec![v])
    }

    /// Sum of squares of all elements.
    pub fn squared_norm(&mut self, a: Var) -> Var {
        self.reduce(Op::SquaredNorm(a.0), a, |d| d.iter().map(|v| v * v).sum())
    }

    /// Sum of absolute values of all elements.
    pub fn abs_sum(&mut self, a: Var) -> Var {
        self.reduce(Op::AbsSum(a.0), a, |d| d.iter().map(|v| v.abs()).sum())
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.reduce(Op::Sum(a.0), a, |d| d.iter().sum())
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.reduce(Op::Mean(a.0), a, |d| d.iter().sum::<f64>() / d.len() as f64)
    }

    /// Elementwise binary cross-entropy of `σ(logits)` against `labels`,
    /// evaluated from the logits without forming `log σ`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        if t.len() != labels.len() {
            return Err(CoreError::shape("bce_with_logits", t.shape(), &[labels.len()]));
        }
        let shape = t.shape().to_vec();
        let data = t
            .data()
            .iter()
            .zip(labels)
            .map(|(&v, &y)| softplus(v) - y * v)
            .collect();
        Ok(self.derived(
            Op::BceLogits {
                logits: logits.0,
                labels: labels.to_vec(),
            },
            &[logits.0],
            shape,
            data,
        ))
    }

    /// Seeds the last node with `seed` and back-propagates.
    pub fn backward(&mut self, seed: &Tensor) -> Result<()> {
        let out = self.output().ok_or(CoreError::EmptyRecord)?;
        self.backward_from(out, seed)
    }

    /// Back-propagates `seed` from node `target`. Leaf gradients add onto
    /// whatever earlier passes left there.
    pub fn backward_from(&mut self, target: Var, seed: &Tensor) -> Result<()> {
        if self.single_use && self.consumed {
            return Err(CoreError::RecordConsumed);
        }
        let tv = &self.nodes[target.0].value;
        if seed.len() != tv.len() {
            return Err(CoreError::shape("backward seed", tv.shape(), seed.shape()));
        }
        self.consumed = true;

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; target.0 + 1];
        adj[target.0] = Some(seed.data().to_vec());

        for i in (0..=target.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].value.requires_grad() {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => self.nodes[i].value.accumulate_grad(&g),
                Op::Affine { x, w, bias } => {
                    let xs = self.nodes[x].value.shape();
                    let (batch, fan_in) = (xs[0], xs[1]);
                    let fan_out = self.nodes[w].value.shape()[0];
                    let cols = fan_in + usize::from(bias);
                    if self.nodes[x].value.requires_grad() {
                        let wd = self.nodes[w].value.data();
                        let mut dx = vec![0.0; batch * fan_in];
                        for b in 0..batch {
                            for o in 0..fan_out {
                                let go = g[b * fan_out + o];
                                let wr = &wd[o * cols..o * cols + fan_in];
                                for k in 0..fan_in {
                                    dx[b * fan_in + k] += go * wr[k];
                                }
                            }
                        }
                        accumulate(&mut adj, x, dx);
                    }
                    if self.nodes[w].value.requires_grad() {
                        let xd = self.nodes[x].value.data();
                        let mut dw = vec![0.0; fan_out * cols];
                        for b in 0..batch {
                            let xr = &xd[b * fan_in..(b + 1) * fan_in];
                            for o in 0..fan_out {
                                let go = g[b * fan_out + o];
                                let row = &mut dw[o * cols..(o + 1) * cols];
                                for k in 0..fan_in {
                                    row[k] += go * xr[k];
                                }
                                if bias {
                                    row[fan_in] += go;
                                }
                            }
                        }
                        accumulate(&mut adj, w, dw);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[i].value.data();
                    let d = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                    self.propagate(&mut adj, a, d);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.data();
                    let d = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
                    self.propagate(&mut adj, a, d);
                }
                Op::Relu(a) => {
                    let x = self.nodes[a].value.data();
                    let d = g
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect();
                    self.propagate(&mut adj, a, d);
                }
                Op::Log(a) => {
                    let x = self.nodes[a].value.data();
                    let d = g.iter().zip(x).map(|(g, x)| g / x).collect();
                    self.propagate(&mut adj, a, d);
                }
                Op::Scale(a, c) => {
                    let d = g.iter().map(|g| c * g).collect();
                    self.propagate(&mut adj, a, d);
                }
                Op::Add(a, b) => {
                    self.propagate(&mut adj, a, g.clone());
                    self.propagate(&mut adj, b, g);
                }
                Op::Sub(a, b) => {
                    let neg = g.iter().map(|v| -v).collect();
                    self.propagate(&mut adj, a, g);
                    self.propagate(&mut adj, b, neg);
                }
                Op::Mul(a, b) => {
                    let (xa, xb) = (self.nodes[a].value.data(), self.nodes[b].value.data());
                    let da = g.iter().zip(xb).map(|(g, y)| g * y).collect();
                    let db = g.iter().zip(xa).map(|(g, x)| g * x).collect();
                    self.propagate(&mut adj, a, da);
                    self.propagate(&mut adj, b, db);
                }
                Op::SquaredNorm(a) => {
                    let x = self.nodes[a].value.data();
                    let d = x.iter().map(|x| 2.0 * g[0] * x).collect();
                    self.propagate(&mut adj, a, d);
                }
                Op::AbsSum(a) => {
                    // subgradient 0 at ties keeps x = x' a fixed point
                    let x = self.nodes[a].value.data();
                    let d = x
                        .iter()
                        .map(|&x| {
                            if x > 0.0 {
                                g[0]
                            } else if x < 0.0 {
                                -g[0]
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.propagate(&mut adj, a, d);
                }
                Op::Sum(a) => {
                    let n = self.nodes[a].value.len();
                    self.propagate(&mut adj, a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a].value.len();
                    self.propagate(&mut adj, a, vec![g[0] / n as f64; n]);
                }
                Op::BceLogits { logits, labels } => {
                    let v = self.nodes[logits].value.data();
                    let d = g
                        .iter()
                        .zip(v)
                        .zip(&labels)
                        .map(|((g, &v), y)| g * (sigmoid(v) - y))
                        .collect();
                    self.propagate(&mut adj, logits, d);
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, adj: &mut [Option<Vec<f64>>], to: usize, d: Vec<f64>) {
        if self.nodes[to].value.requires_grad() {
            accumulate(adj, to, d);
        }
    }

    /// Dense Jacobian of node `output` with respect to the concatenation of
    /// the leaves in `wrt`, one backward pass per output component.
    pub fn jacobian(&mut self, output: Var, wrt: &[Var]) -> Result<JacobianMatrix> {
        let m = self.value(output).len();
        let cols: usize = wrt.iter().map(|&v| self.value(v).len()).sum();
        let mut data = Vec::with_capacity(m * cols);
        let shape = self.value(output).shape().to_vec();
        for i in 0..m {
            self.zero_grads();
            let mut seed = Tensor::zeros(shape.clone());
            seed.data_mut()[i] = 1.0;
            self.backward_from(output, &seed)?;
            data.extend(self.grads_flat(wrt));
        }
        self.zero_grads();
        Ok(JacobianMatrix { rows: m, cols, data })
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], to: usize, d: Vec<f64>) {
    match adj[to].as_mut() {
        Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
        None => adj[to] = Some(d),
    }
}

/// Runs `model` on `input` with trainable parameters and a grad-tracking
/// input, returning the output value and the record for backward.
pub fn forward(model: &Model, input: &Tensor) -> Result<(Tensor, ComputationRecord)> {
    let mut rec = ComputationRecord::new();
    let x = rec.leaf(input.detached().with_requires_grad(true));
    rec.set_input(x);
    let (out, params) = model.apply(&mut rec, x, ParamMode::Trainable)?;
    rec.set_parameters(params);
    Ok((rec.value(out).clone(), rec))
}

/// Which variable a [`jacobian`] differentiates against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    Input,
    Parameters,
}

/// Row-major Jacobian: row `i` is the gradient of output component `i`
/// with respect to the flattened target.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl JacobianMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `J Jᵀ`, a `rows × rows` matrix stored row-major.
    pub fn outer_gram(&self) -> Vec<f64> {
        let n = self.rows;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    /// `vᵀ J` for a vector over the rows.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &s) in v.iter().enumerate() {
            for (o, j) in out.iter_mut().zip(self.row(r)) {
                *o += s * j;
            }
        }
        out
    }

    /// `J u` for a vector over the columns.
    pub fn right_mul(&self, u: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(u).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Jacobian of a model's output for one example. `input` must be a single
/// example, either `[n]` or `[1, n]`.
pub fn jacobian(model: &Model, input: &Tensor, wrt: Wrt) -> Result<JacobianMatrix> {
    let x = match input.shape().len() {
        1 => input.detached().reshaped(vec![1, input.len()])?,
        _ if input.batch() == 1 => input.detached(),
        _ => return Err(CoreError::shape("jacobian", &[1, model.input_dim()], input.shape())),
    };
    let (_, mut rec) = forward(model, &x)?;
    let out = rec.output().ok_or(CoreError::EmptyRecord)?;
    let targets = match wrt {
        Wrt::Input => vec![rec.input().expect("forward marks its input")],
        Wrt::Parameters => rec.parameters().to_vec(),
    };
    rec.jacobian(out, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_leaf(rec: &mut ComputationRecord, v: f64) -> Var {
        rec.leaf(Tensor::scalar(v).with_requires_grad(true))
    }

    #[test]
    fn square_derivative() {
        let mut rec = ComputationRecord::new();
        let x = scalar_leaf(&mut rec, 3.0);
        rec.mul(x, x).unwrap();
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(rec.grad(x), Some(&[6.0][..]));
    }

    #[test]
    fn bce_logit_gradient_at_zero() {
        let mut rec = ComputationRecord::new();
        let v = scalar_leaf(&mut rec, 0.0);
        rec.bce_with_logits(v, &[1.0]).unwrap();
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        assert!((rec.grad(v).unwrap()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn second_backward_doubles() {
        let mut rec = ComputationRecord::new();
        let x = rec.leaf(Tensor::row(&[1.0, -2.0]).with_requires_grad(true));
        let t = rec.tanh(x);
        rec.squared_norm(t);
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        let once = rec.grad(x).unwrap().to_vec();
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        let twice = rec.grad(x).unwrap();
        for (a, b) in once.iter().zip(twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn single_use_record_rejects_replay() {
        let mut rec = ComputationRecord::single_use();
        let x = scalar_leaf(&mut rec, 2.0);
        rec.log(x);
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(rec.backward(&Tensor::scalar(1.0)), Err(CoreError::RecordConsumed));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut rec = ComputationRecord::new();
        let x = rec.leaf(Tensor::row(&[1.0, 2.0]).with_requires_grad(true));
        let c = rec.constant(Tensor::row(&[0.5, 0.5]));
        let d = rec.sub(x, c).unwrap();
        rec.squared_norm(d);
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        assert!(rec.grad(c).is_none());
        assert_eq!(rec.grad(x), Some(&[1.0, 3.0][..]));
    }

    #[test]
    fn seed_shape_checked() {
        let mut rec = ComputationRecord::new();
        let x = rec.leaf(Tensor::row(&[1.0, 2.0]).with_requires_grad(true));
        rec.sigmoid(x);
        assert!(rec.backward(&Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn abs_sum_tie_has_zero_subgradient() {
        let mut rec = ComputationRecord::new();
        let x = rec.leaf(Tensor::row(&[0.0, 2.0, -1.0]).with_requires_grad(true));
        rec.abs_sum(x);
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(rec.grad(x), Some(&[0.0, 1.0, -1.0][..]));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = x*x + x  ->  f' = 2x + 1
        let mut rec = ComputationRecord::new();
        let x = scalar_leaf(&mut rec, 1.5);
        let sq = rec.mul(x, x).unwrap();
        rec.add(sq, x).unwrap();
        rec.backward(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(rec.grad(x), Some(&[4.0][..]));
    }
}
