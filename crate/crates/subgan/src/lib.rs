//! Experiment harness for [`subgan_core`]: plain-text run configurations,
//! sweep plans, per-seed run directories with CSV logs and checkpoints,
//! paired equivalence comparisons, analysis reports and SVG plots.

pub mod analyze;
pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod error;
pub mod plan;
pub mod plot;
pub mod runner;
pub mod svg;
pub mod sweep;
pub mod table;

pub use subgan_core as core;
