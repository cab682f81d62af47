//! Parameter update rules over flattened parameter vectors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OptimizerKind {
    /// Plain gradient descent; the only choice allowed in equivalence mode.
    #[default]
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const MOMENTUM: OptimizerKind = OptimizerKind::Momentum { beta: 0.9 };
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
    };

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum { .. } => "momentum",
            OptimizerKind::Adam { .. } => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = CoreError;
    fn from_str(s: &str) -> Result<Self, CoreError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "momentum" | "momentum-sgd" | "momentum_sgd" => Ok(OptimizerKind::MOMENTUM),
            "adam" | "adaptive-moment" | "adaptive_moment" => Ok(OptimizerKind::ADAM),
            other => Err(CoreError::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Optimizer with its running state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Momentum { .. } => (vec![0.0; len], Vec::new()),
            OptimizerKind::Adam { .. } => (vec![0.0; len], vec![0.0; len]),
        };
        Optimizer { kind, m, v, t: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update in place and returns the update vector `Δθ`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Vec<f64> {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let delta: Vec<f64> = match self.kind {
            OptimizerKind::Sgd => grad.iter().map(|g| -lr * g).collect(),
            OptimizerKind::Momentum { beta } => {
                for (m, g) in self.m.iter_mut().zip(grad) {
                    *m = beta * *m + g;
                }
                self.m.iter().map(|m| -lr * m).collect()
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.t as i32;
                let c1 = 1.0 - libm::pow(beta1, t as f64);
                let c2 = 1.0 - libm::pow(beta2, t as f64);
                self.m
                    .iter_mut()
                    .zip(self.v.iter_mut())
                    .zip(grad)
                    .map(|((m, v), g)| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        -lr * (*m / c1) / (libm::sqrt(*v / c2) + eps)
                    })
                    .collect()
            }
        };
        for (p, d) in params.iter_mut().zip(&delta) {
            *p += d;
        }
        delta
    }
}
