//! Discrepancies: BCE, ℓ2 and ℓ1, as plain evaluations and as record builders.
//!
//! Label losses act on discriminator logits `v`, with `y = σ(v)`. Regression
//! losses act on generator outputs `[batch, d]` against a constant target.
//! `Reduction::Mean` divides by the batch size (rows), never by `d`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::autodiff::{ComputationRecord, Var};
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Discrepancy {
    /// Binary cross-entropy against the target label.
    #[default]
    Bce,
    /// `½‖·‖²` per example.
    L2,
    /// `‖·‖₁` per example.
    L1,
    /// `log(1 − σ(v))` on generated samples (the minimax generator objective).
    /// Only meaningful as a label loss with the "real" label.
    MinimaxBce,
}

impl Discrepancy {
    pub fn name(self) -> &'static str {
        match self {
            Discrepancy::Bce => "bce",
            Discrepancy::L2 => "l2",
            Discrepancy::L1 => "l1",
            Discrepancy::MinimaxBce => "minimax_bce",
        }
    }
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Discrepancy {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bce" => Ok(Discrepancy::Bce),
            "l2" => Ok(Discrepancy::L2),
            "l1" => Ok(Discrepancy::L1),
            "minimax_bce" | "minimax" => Ok(Discrepancy::MinimaxBce),
            other => Err(CoreError::Config(alloc::format!("unknown discrepancy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    pub fn name(self) -> &'static str {
        match self {
            Reduction::Mean => "mean",
            Reduction::Sum => "sum",
        }
    }

    fn factor(self, batch: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / batch as f64,
            Reduction::Sum => 1.0,
        }
    }
}

impl FromStr for Reduction {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(Reduction::Mean),
            "sum" => Ok(Reduction::Sum),
            other => Err(CoreError::Config(alloc::format!("unknown reduction `{other}`"))),
        }
    }
}

fn check_label(y: f64) -> Result<()> {
    if y == 0.0 || y == 1.0 {
        Ok(())
    } else {
        Err(CoreError::InvalidLabel(y))
    }
}

/// Mean BCE of probabilities `y ∈ (0, 1)` against labels in {0, 1}.
pub fn bce_loss(y: &Tensor, y_star: &Tensor) -> Result<f64> {
    if y.len() != y_star.len() {
        return Err(CoreError::shape("bce_loss", y.shape(), y_star.shape()));
    }
    let mut total = 0.0;
    for (&p, &t) in y.data().iter().zip(y_star.data()) {
        check_label(t)?;
        total += if t == 1.0 { -libm::log(p) } else { -libm::log1p(-p) };
    }
    Ok(total / y.len() as f64)
}

fn paired(x: &Tensor, x_prime: &Tensor, op: &'static str) -> Result<()> {
    if x.shape() != x_prime.shape() {
        return Err(CoreError::shape(op, x.shape(), x_prime.shape()));
    }
    Ok(())
}

/// `½‖x − x'‖²` averaged over the batch.
pub fn l2_discrepancy(x: &Tensor, x_prime: &Tensor) -> Result<f64> {
    paired(x, x_prime, "l2_discrepancy")?;
    let s: f64 = x.data().iter().zip(x_prime.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * s / x.batch() as f64)
}

/// `‖x − x'‖₁` averaged over the batch.
pub fn l1_discrepancy(x: &Tensor, x_prime: &Tensor) -> Result<f64> {
    paired(x, x_prime, "l1_discrepancy")?;
    let s: f64 = x.data().iter().zip(x_prime.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / x.batch() as f64)
}

/// Records `δ(σ(logits), label)` reduced over the batch and returns the scalar node.
pub fn label_loss(
    rec: &mut ComputationRecord,
    logits: Var,
    label: f64,
    kind: Discrepancy,
    reduction: Reduction,
) -> Result<Var> {
    check_label(label)?;
    let t = rec.value(logits);
    let (n, batch, shape) = (t.len(), t.batch(), t.shape().to_vec());
    let k = reduction.factor(batch);
    Ok(match kind {
        Discrepancy::Bce => {
            let e = rec.bce_with_logits(logits, &vec![label; n])?;
            let s = rec.sum(e);
            rec.scale(s, k)
        }
        Discrepancy::MinimaxBce => {
            // log(1 − σ(v)) = −softplus(v) = −bce(v, 0) for the real label
            let e = rec.bce_with_logits(logits, &vec![1.0 - label; n])?;
            let s = rec.sum(e);
            rec.scale(s, -k)
        }
        Discrepancy::L2 => {
            let y = rec.sigmoid(logits);
            let c = rec.constant(Tensor::filled(shape, label));
            let d = rec.sub(y, c)?;
            let s = rec.squared_norm(d);
            rec.scale(s, 0.5 * k)
        }
        Discrepancy::L1 => {
            let y = rec.sigmoid(logits);
            let c = rec.constant(Tensor::filled(shape, label));
            let d = rec.sub(y, c)?;
            let s = rec.abs_sum(d);
            rec.scale(s, k)
        }
    })
}

/// Records the regression loss of `x` onto the constant node `target`.
pub fn regression_loss(
    rec: &mut ComputationRecord,
    x: Var,
    target: Var,
    kind: Discrepancy,
    reduction: Reduction,
) -> Result<Var> {
    let batch = rec.value(x).batch();
    let k = reduction.factor(batch);
    let d = rec.sub(x, target)?;
    match kind {
        Discrepancy::L2 => {
            let s = rec.squared_norm(d);
            Ok(rec.scale(s, 0.5 * k))
        }
        Discrepancy::L1 => {
            let s = rec.abs_sum(d);
            Ok(rec.scale(s, k))
        }
        other => Err(CoreError::UnsupportedRegressionLoss(other.name())),
    }
}

/// Discriminator loss: mean BCE on real (label 1) plus mean BCE on fake (label 0).
pub fn discriminator_loss(rec: &mut ComputationRecord, real_logits: Var, fake_logits: Var) -> Result<Var> {
    let a = label_loss(rec, real_logits, 1.0, Discrepancy::Bce, Reduction::Mean)?;
    let b = label_loss(rec, fake_logits, 0.0, Discrepancy::Bce, Reduction::Mean)?;
    rec.add(a, b)
}

/// Row-wise helper for callers that need per-example values.
pub fn per_example_l2(x: &Tensor, x_prime: &Tensor) -> Result<Vec<f64>> {
    paired(x, x_prime, "per_example_l2")?;
    Ok(x
        .rows()
        .zip(x_prime.rows())
        .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
        .collect())
}
