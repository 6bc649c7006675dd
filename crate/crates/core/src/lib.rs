//! Traffic state estimation on corridors with varying speed limits using
//! teacher-student ensembles of physics-informed neural networks.
//!
//! The pipeline: [`solver`] produces a ground-truth density field with a
//! Godunov scheme; [`training`] fits per-segment physics-informed networks
//! ([`nn`]); [`ensemble`] combines them into teacher ensembles routed by a
//! characteristics classifier; [`baselines`] provides the comparison methods;
//! [`experiment`] wires everything into reproducible runs.

pub mod baselines;
pub mod classifier;
pub mod corridor;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod field;
pub mod nn;
pub mod render;
pub mod solver;
pub mod training;

pub use error::{Error, Result};
