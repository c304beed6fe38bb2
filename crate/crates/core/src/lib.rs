//! Semi-supervised in-context learning on binary Gaussian mixtures.
//!
//! The crate covers the full experimental stack for studying how linear
//! attention uses partially labeled demonstrations:
//!
//! - [`gmm`]: task sampling, dataset generation with hidden labels, prompts.
//! - [`estimators`]: the supervised plug-in, its semi-supervised refinements
//!   through powers of the debiased covariance, polynomial estimators, and
//!   the label-update iterations behind them.
//! - [`attention`]: residual linear attention stacks and extraction of the
//!   covariance polynomial a stack implements.
//! - [`theory`]: closed-form error expressions and Monte-Carlo counterparts.
//! - [`experiments`]: the accuracy harness, mixing-weight search, and stack
//!   training.
//! - [`looptab`]: risk-gated pseudo-labeling loops over pluggable in-context
//!   base predictors, with CSV ingestion.
//!
//! All numeric code is generic over the scalar through [`scalar::Real`]
//! (`f32` or `f64`); the aliases below pin the `f64` instantiations the
//! experiment tooling uses.

pub mod attention;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod gmm;
pub mod looptab;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod theory;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the main types.
pub type TaskSpec64 = gmm::TaskSpec<f64>;
pub type SemiDataset64 = gmm::SemiDataset<f64>;
pub type Prompt64 = gmm::Prompt<f64>;
pub type PolyCoeffs64 = estimators::PolyCoeffs<f64>;
pub type AttnStack64 = attention::AttnStack<f64>;
pub type ExperimentConfig64 = experiments::ExperimentConfig<f64>;
pub type CurvePoint64 = experiments::CurvePoint<f64>;
pub type ErrorEstimate64 = theory::ErrorEstimate<f64>;
pub type TabularSplit64 = looptab::TabularSplit<f64>;
pub type LoopResult64 = looptab::LoopResult<f64>;
