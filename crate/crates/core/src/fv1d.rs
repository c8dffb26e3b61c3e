//! Vertex-centred finite volume semidiscretization of the 1D forward equation
//!
//! ```text
//! dp/dtau = d^2( sigma(x,tau)^2 / 2 * p ) / dx^2  -  d( mu(x,tau) * p ) / dx
//! ```
//!
//! with zero-flux boundaries. Integrating over the cell around node `i` and
//! dividing by the cell width gives the interior row
//!
//! ```text
//! P_i' =  sigma_{i-1}^2 P_{i-1} / (step_i (step_i + step_{i+1}))
//!       - sigma_i^2     P_i     / (step_i step_{i+1})
//!       + sigma_{i+1}^2 P_{i+1} / (step_{i+1} (step_i + step_{i+1}))
//!       + [ mu_{i-1/2} (P_{i-1} + P_i)/2 - mu_{i+1/2} (P_i + P_{i+1})/2 ]
//!         * 2 / (step_i + step_{i+1})
//! ```
//!
//! where `sigma` is sampled at nodes and `mu` at cell boundaries. The first
//! and last rows drop the outer flux entirely (`P_1' = -f_{3/2} * 2/step_2`,
//! `P_m' = f_{m-1/2} * 2/step_m`), which makes the scheme conservative: the
//! weighted column sums `w^T A` vanish identically, so total mass is a
//! discrete invariant of the semidiscrete system.

use crate::error::{Error, Result};
use crate::grids::NonUniformGrid;

/// Drift and diffusion coefficient functions of a 1D forward equation.
pub trait Coefficients1D {
    /// Drift `mu(x, tau)`.
    fn drift(&self, x: f64, tau: f64) -> f64;
    /// Diffusion `sigma(x, tau) >= 0`.
    fn diffusion(&self, x: f64, tau: f64) -> f64;
}

/// Adapter turning a pair of closures into [`Coefficients1D`].
pub struct ClosureCoeffs1D<M, S>
where
    M: Fn(f64, f64) -> f64,
    S: Fn(f64, f64) -> f64,
{
    pub drift: M,
    pub diffusion: S,
}

impl<M, S> Coefficients1D for ClosureCoeffs1D<M, S>
where
    M: Fn(f64, f64) -> f64,
    S: Fn(f64, f64) -> f64,
{
    fn drift(&self, x: f64, tau: f64) -> f64 {
        (self.drift)(x, tau)
    }
    fn diffusion(&self, x: f64, tau: f64) -> f64 {
        (self.diffusion)(x, tau)
    }
}

/// Tridiagonal space operator of the semidiscrete system `P' = A P`.
///
/// `lower[0]` and `upper[m-1]` are unused and held at zero.
#[derive(Debug, Clone)]
pub struct TridiagonalOperator {
    pub lower: Vec<f64>,
    pub main: Vec<f64>,
    pub upper: Vec<f64>,
    /// Time the coefficients were sampled at.
    pub tau: f64,
}

impl TridiagonalOperator {
    pub fn len(&self) -> usize {
        self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty()
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.main.len();
        debug_assert_eq!(x.len(), m);
        debug_assert_eq!(out.len(), m);
        for i in 0..m {
            let mut v = self.main[i] * x[i];
            if i > 0 {
                v += self.lower[i] * x[i - 1];
            }
            if i + 1 < m {
                v += self.upper[i] * x[i + 1];
            }
            out[i] = v;
        }
    }

    /// Largest absolute row sum (infinity norm of `A`).
    pub fn max_row_sum(&self) -> f64 {
        (0..self.main.len())
            .map(|i| self.lower[i].abs() + self.main[i].abs() + self.upper[i].abs())
            .fold(0.0, f64::max)
    }
}

fn sample_diffusion_sq<C: Coefficients1D + ?Sized>(
    coeffs: &C,
    x: f64,
    tau: f64,
) -> Result<f64> {
    let s = coeffs.diffusion(x, tau);
    if !s.is_finite() {
        return Err(Error::Coefficient(format!(
            "diffusion is not finite at x = {x}, tau = {tau}"
        )));
    }
    if s < 0.0 {
        return Err(Error::Coefficient(format!(
            "diffusion is negative at x = {x}, tau = {tau}"
        )));
    }
    Ok(s * s)
}

fn sample_drift<C: Coefficients1D + ?Sized>(coeffs: &C, x: f64, tau: f64) -> Result<f64> {
    let mu = coeffs.drift(x, tau);
    if !mu.is_finite() {
        return Err(Error::Coefficient(format!(
            "drift is not finite at x = {x}, tau = {tau}"
        )));
    }
    Ok(mu)
}

/// Assembles the conservative finite volume operator at time `tau`.
pub fn assemble_1d<C: Coefficients1D + ?Sized>(
    grid: &NonUniformGrid,
    coeffs: &C,
    tau: f64,
) -> Result<TridiagonalOperator> {
    let m = grid.len();
    let nodes = grid.nodes();
    let step = grid.steps();
    let bounds = grid.bounds();

    let mut sig2 = Vec::with_capacity(m);
    for &x in nodes {
        sig2.push(sample_diffusion_sq(coeffs, x, tau)?);
    }
    // mu_b[k] = drift at the boundary between cells k-1 and k, 1 <= k <= m-1.
    let mut mu_b = vec![0.0; m];
    for (k, mu) in mu_b.iter_mut().enumerate().take(m).skip(1) {
        *mu = sample_drift(coeffs, bounds[k], tau)?;
    }

    let mut lower = vec![0.0; m];
    let mut main = vec![0.0; m];
    let mut upper = vec![0.0; m];

    // First row: only the flux at bound 3/2 leaves the cell.
    let s0 = 2.0 / step[1];
    main[0] = s0 * (-0.5 * mu_b[1] - 0.5 * sig2[0] / step[1]);
    upper[0] = s0 * (-0.5 * mu_b[1] + 0.5 * sig2[1] / step[1]);

    for k in 1..m - 1 {
        let dl = step[k];
        let dr = step[k + 1];
        let ds = dl + dr;
        lower[k] = sig2[k - 1] / (dl * ds) + mu_b[k] / ds;
        main[k] = -sig2[k] / (dl * dr) + (mu_b[k] - mu_b[k + 1]) / ds;
        upper[k] = sig2[k + 1] / (dr * ds) - mu_b[k + 1] / ds;
    }

    // Last row: only the flux at bound m-1/2 enters the cell.
    let sm = 2.0 / step[m - 1];
    lower[m - 1] = sm * (0.5 * mu_b[m - 1] + 0.5 * sig2[m - 2] / step[m - 1]);
    main[m - 1] = sm * (0.5 * mu_b[m - 1] - 0.5 * sig2[m - 1] / step[m - 1]);

    Ok(TridiagonalOperator {
        lower,
        main,
        upper,
        tau,
    })
}

/// Weighted column sums `w^T A`, which vanish identically for conservative
/// operators. Exposed for conservation diagnostics and tests.
pub fn weighted_column_sums(grid: &NonUniformGrid, op: &TridiagonalOperator) -> Vec<f64> {
    let m = op.len();
    let w = grid.weights();
    let mut sums = vec![0.0; m];
    for i in 0..m {
        sums[i] += w[i] * op.main[i];
        if i > 0 {
            sums[i - 1] += w[i] * op.lower[i];
        }
        if i + 1 < m {
            sums[i + 1] += w[i] * op.upper[i];
        }
    }
    sums
}
