//! Diversity-sensitive regularization for conditional and unconditional GANs
//! on small synthetic tasks, with a from-scratch autodiff substrate.

// `Var::add` and friends return `Result` and cannot be the operator traits.
#![allow(clippy::should_implement_trait)]

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod nd;
pub mod nets;
pub mod objectives;
pub mod rng;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
