//! Simulation and inference for Poisson change-point models whose jump size may
//! vanish with the number of observed trajectories.
//!
//! The crate covers the whole pipeline: sampling `n` independent inhomogeneous
//! Poisson trajectories with intensity `ψ(t) + r·1{t > θ}`, the exact
//! (piecewise-linear in `θ`) log-likelihood, maximum likelihood and Bayesian
//! estimation of `θ`, the log-Wiener and log-Poisson limit likelihood-ratio
//! processes, and calibrated one-sided tests with Monte Carlo power curves.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod likelihood;
pub mod limits;
pub mod model;
pub mod numerics;
pub mod testing;

pub use error::{Error, Result};
