//! Triangular distribution transform (TDT) for linear label-difference
//! regression.
//!
//! Features are standardized against a reference feature map and passed through
//! a symmetric triangular density; differences of those densities vary linearly
//! with label differences and are mapped to labels by a linear head. The crate
//! contains the autodiff engine, the transform and its losses, prior-set
//! handling, a synthetic training harness, and checkpoint/CLI plumbing.

pub mod checkpoint;
pub mod checks;
pub mod cli;
pub mod config;
pub mod data;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod losses;
pub mod model;
pub mod prior;
pub mod rng;
pub mod tdt;
pub mod tensor;

pub use error::{Error, Result};
