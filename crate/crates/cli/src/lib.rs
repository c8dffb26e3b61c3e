//! Experiment harness for the `fvadi` solver library.
//!
//! Three layers:
//!
//! - [`sets`]: the built-in parameter sets A-G together with the shared
//!   market data (rates, spot, strike ladder) used by the calibration
//!   experiments.
//! - [`artifacts`]: CSV writers; every float is rendered with
//!   [`artifacts::fmt`] so repeated runs produce byte-identical files.
//! - [`experiments`]: runnable experiment configurations returning
//!   reports with headline numbers (mass drift, mixed errors, fitted
//!   convergence orders, implied-volatility ladders).
//!
//! The `fvadi` binary in this crate is a thin argument-parsing shell over
//! [`experiments`]; integration tests drive the same runners directly.

pub mod artifacts;
pub mod experiments;
pub mod sets;
