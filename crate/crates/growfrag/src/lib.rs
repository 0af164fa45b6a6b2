//! Spectral analysis of growth-fragmentation dynamics.
//!
//! The library follows a single tagged fragment: a piecewise-deterministic
//! Markov process that grows along dx/dt = c(x) and jumps down at rate K(x).
//! Monte Carlo functionals of that process estimate the leading eigenvalue,
//! eigenfunction and dual eigenmeasure of the associated operator; a
//! log-mass finite-difference solver and closed-form analytics for the
//! homogeneous case serve as independent cross-checks.

pub mod bump;
pub mod config;
pub mod ergo;
pub mod error;
pub mod flow;
pub mod levy;
pub mod model;
pub mod output;
pub mod pde;
pub mod pdmp;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod tilt;

pub use error::{Error, Result};
