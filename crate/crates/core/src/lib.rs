//! Mass-conservative finite volume solvers for forward Kolmogorov equations.
//!
//! The crate discretizes 1D and 2D forward (Fokker-Planck) equations with a
//! vertex-centred finite volume scheme on smoothly graded non-uniform grids,
//! advances them with Crank-Nicolson (1D) or the Hundsdorfer-Verwer ADI
//! scheme (2D), and builds the leverage surface of a stochastic-local-
//! volatility model by matching its marginal density to a local-volatility
//! benchmark at every time level.
//!
//! Module map:
//! - [`grids`]: sinh-stretched and pinned non-uniform grids
//! - [`field`]: density vectors/matrices with quadrature weights
//! - [`fv1d`], [`fv2d`]: conservative operator assembly
//! - [`timestepping`]: Crank-Nicolson, Hundsdorfer-Verwer, implicit Euler
//! - [`models`]: Black-Scholes, square-root diffusion, Heston and SLV
//!   coefficients plus closed-form reference densities
//! - [`calibration`]: leverage surface construction and marginal comparisons
//! - [`diagnostics`]: error metrics, convergence fits, pricing, implied vol

pub mod calibration;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod fv1d;
pub mod fv2d;
pub mod grids;
mod krylov;
pub mod models;
pub mod timestepping;

pub use error::{Error, Result};
pub use field::{DensityField1D, DensityField2D};
pub use grids::NonUniformGrid;
