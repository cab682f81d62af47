//! Generator training for GANs, expressed two ways: the usual gradient step
//! through a frozen discriminator, and the decomposed form in which the
//! discriminator's "real" label is first inverted into data space (producing
//! inverse examples) and the generator then regresses its outputs onto them.
//!
//! The crate is `no_std` and only needs `alloc`. It carries a small
//! reverse-mode autodiff tape, MLP and toy linear/logistic models, the
//! BCE/ℓ1/ℓ2 discrepancies, both training regimes, the kernel and Taylor
//! diagnostics, seeded synthetic distributions and the Gaussian Fréchet
//! metric. File formats, the CLI and plotting live in the `subgan` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use crate::autodiff::{jacobian, ComputationRecord, JacobianMatrix, Var, Wrt};
pub use crate::error::{CoreError, Result};
pub use crate::loss::{Discrepancy, Reduction};
pub use crate::model::{Activation, LayerSpec, Model, ParamMode, ToyDiscriminator, ToyGenerator};
pub use crate::tensor::Tensor;
pub use crate::trainer::{InverseBatch, Regime, StepReport, SubproblemConfig};
