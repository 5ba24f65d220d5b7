//! Difference-in-differences and fixed-effects counterfactual estimators for
//! binary-treatment panels, with bootstrap inference, assumption diagnostics
//! and sensitivity analysis for parallel-trends violations.

// Grid code indexes several parallel unit/time arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod diagnostics;
pub mod did;
pub mod error;
pub mod estimate;
pub mod fe;
pub mod imputation;
pub mod inference;
pub mod panel;
pub mod sensitivity;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{run_estimator, DynamicEffect, EffectEstimates, EstimatorConfig, Method};
pub use panel::PanelDataset;
