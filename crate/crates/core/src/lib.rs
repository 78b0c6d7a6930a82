//! Simulation and certified stability budgets for networks of identical LTI
//! agents coupled through asynchronously sampled, delayed, error-corrupted,
//! zero-order-held signals.
//!
//! The crate is organised bottom-up:
//!
//! * [`matan`] dense matrix analysis (exponential, its integral, spectral
//!   constants, closed-form singular-value bounds);
//! * [`graphs`] undirected interaction topologies and their algebra;
//! * [`design`] Riccati-based gain synthesis and Lyapunov-family checks;
//! * [`bounds`] stability margins and maximum sampling/delay budgets;
//! * [`sampling`] asynchronous schedules and measurement distortion models;
//! * [`sim`] the exact event-driven simulator and trace metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod design;
mod error;
pub mod graphs;
pub mod matan;
pub mod model;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
pub use model::LtiModel;

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;
