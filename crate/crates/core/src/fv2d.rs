//! Vertex-centred finite volume semidiscretization of the 2D forward equation
//!
//! ```text
//! dp/dtau = d^2( sigma1^2/2 p )/dx^2 + d^2( rho sigma1 sigma2 p )/dx dy
//!         + d^2( sigma2^2/2 p )/dy^2 - d( mu1 p )/dx - d( mu2 p )/dy
//! ```
//!
//! with zero normal flux through all four edges. The semidiscrete operator is
//! split as `A = A0 + A1 + A2`:
//!
//! - `A1` collects diffusion and advection in x: tridiagonal rows along each
//!   y-line, identical in structure to the 1D scheme.
//! - `A2` does the same along y. In the column-stacked vectorization
//!   `vec[P]_{i + j*m1} = P_{i,j}` it couples entries at stride `m1`.
//! - `A0` carries the mixed derivative as a nine-point stencil. The mixed
//!   flux at an interior cell corner averages the four touching cells,
//!
//!   ```text
//!   f_{i-1/2,j-1/2} = rho sigma1 sigma2 |corner * (P_{i-1,j-1} + P_{i-1,j}
//!                                               + P_{i,j-1} + P_{i,j}) / 4
//!   ```
//!
//!   and cells outside the domain are mirrored from the nearest interior cell
//!   (ghost extension). On the outermost corner levels the coefficient is
//!   sampled at the clamped coordinate (domain corner).
//!
//! Conservation: the weighted column sums of `A1` and `A2` vanish
//! identically. Those of `A0` vanish everywhere except in the four corner
//! columns, where they telescope to `+-(rho sigma1 sigma2)` at the domain
//! corners. Mass is therefore invariant whenever the density keeps zero
//! corner values (the corner condition of the continuous problem).
//!
//! For models whose y-boundary is attainable (mass piles up at `y = 0`), the
//! four-cell corner average is biased: every mixed flux on the corner level
//! `y_{3/2}` is replaced by the one-sided first-order average
//! `rho sigma1 sigma2 * (P_{i-1,2} + P_{i,2}) / 2` (1-based node indices),
//! which avoids differencing across the boundary layer. Only rows with
//! stencil support on node row 2 change.

use crate::error::{Error, Result};
use crate::fv1d::Coefficients1D;
use crate::grids::NonUniformGrid;

/// Coefficient functions of a 2D forward equation with constant correlation.
pub trait Coefficients2D {
    /// Drift in x, `mu1(x, y, tau)`.
    fn drift_x(&self, x: f64, y: f64, tau: f64) -> f64;
    /// Drift in y, `mu2(x, y, tau)`.
    fn drift_y(&self, x: f64, y: f64, tau: f64) -> f64;
    /// Diffusion in x, `sigma1(x, y, tau) >= 0`.
    fn diffusion_x(&self, x: f64, y: f64, tau: f64) -> f64;
    /// Diffusion in y, `sigma2(x, y, tau) >= 0`.
    fn diffusion_y(&self, x: f64, y: f64, tau: f64) -> f64;
    /// Constant correlation `rho` in `[-1, 1]`.
    fn correlation(&self) -> f64;
}

/// Adapter turning closures into [`Coefficients2D`].
pub struct ClosureCoeffs2D<M1, M2, S1, S2>
where
    M1: Fn(f64, f64, f64) -> f64,
    M2: Fn(f64, f64, f64) -> f64,
    S1: Fn(f64, f64, f64) -> f64,
    S2: Fn(f64, f64, f64) -> f64,
{
    pub drift_x: M1,
    pub drift_y: M2,
    pub diffusion_x: S1,
    pub diffusion_y: S2,
    pub correlation: f64,
}

impl<M1, M2, S1, S2> Coefficients2D for ClosureCoeffs2D<M1, M2, S1, S2>
where
    M1: Fn(f64, f64, f64) -> f64,
    M2: Fn(f64, f64, f64) -> f64,
    S1: Fn(f64, f64, f64) -> f64,
    S2: Fn(f64, f64, f64) -> f64,
{
    fn drift_x(&self, x: f64, y: f64, tau: f64) -> f64 {
        (self.drift_x)(x, y, tau)
    }
    fn drift_y(&self, x: f64, y: f64, tau: f64) -> f64 {
        (self.drift_y)(x, y, tau)
    }
    fn diffusion_x(&self, x: f64, y: f64, tau: f64) -> f64 {
        (self.diffusion_x)(x, y, tau)
    }
    fn diffusion_y(&self, x: f64, y: f64, tau: f64) -> f64 {
        (self.diffusion_y)(x, y, tau)
    }
    fn correlation(&self) -> f64 {
        self.correlation
    }
}

/// Which spatial direction a directional operator couples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Tridiagonal coupling along one axis, stored field-indexed: entry
/// `k = i + j*m1` couples its neighbors at `i -+ 1` (axis X) or `j -+ 1`
/// (axis Y).
#[derive(Debug, Clone)]
pub struct DirectionalOperator {
    pub(crate) axis: Axis,
    pub(crate) m1: usize,
    pub(crate) m2: usize,
    pub(crate) lower: Vec<f64>,
    pub(crate) main: Vec<f64>,
    pub(crate) upper: Vec<f64>,
}

impl DirectionalOperator {
    fn zeros(axis: Axis, m1: usize, m2: usize) -> Self {
        let n = m1 * m2;
        Self {
            axis,
            m1,
            m2,
            lower: vec![0.0; n],
            main: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    /// `out += A x`.
    pub fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        let (m1, m2) = (self.m1, self.m2);
        debug_assert_eq!(x.len(), m1 * m2);
        match self.axis {
            Axis::X => {
                for j in 0..m2 {
                    let base = j * m1;
                    for i in 0..m1 {
                        let k = base + i;
                        let mut v = self.main[k] * x[k];
                        if i > 0 {
                            v += self.lower[k] * x[k - 1];
                        }
                        if i + 1 < m1 {
                            v += self.upper[k] * x[k + 1];
                        }
                        out[k] += v;
                    }
                }
            }
            Axis::Y => {
                for j in 0..m2 {
                    let base = j * m1;
                    for i in 0..m1 {
                        let k = base + i;
                        let mut v = self.main[k] * x[k];
                        if j > 0 {
                            v += self.lower[k] * x[k - m1];
                        }
                        if j + 1 < m2 {
                            v += self.upper[k] * x[k + m1];
                        }
                        out[k] += v;
                    }
                }
            }
        }
    }
}

/// Nine-point mixed-derivative stencil. Plane `(di+1) + 3*(dj+1)` holds the
/// coefficient multiplying the neighbor at offset `(di, dj)`; coefficients
/// reaching outside the domain are folded into interior planes at assembly,
/// so application never indexes out of range.
#[derive(Debug, Clone)]
pub struct NinePointStencil {
    pub(crate) m1: usize,
    pub(crate) m2: usize,
    pub(crate) planes: [Vec<f64>; 9],
}

impl NinePointStencil {
    fn zeros(m1: usize, m2: usize) -> Self {
        let n = m1 * m2;
        Self {
            m1,
            m2,
            planes: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    pub fn coefficient(&self, i: usize, j: usize, di: isize, dj: isize) -> f64 {
        let plane = ((di + 1) + 3 * (dj + 1)) as usize;
        self.planes[plane][i + j * self.m1]
    }

    pub fn is_zero(&self) -> bool {
        self.planes.iter().all(|p| p.iter().all(|&c| c == 0.0))
    }

    /// `out += A0 x`.
    pub fn apply_add(&self, x: &[f64], out: &mut [f64]) {
        let (m1, m2) = (self.m1, self.m2);
        debug_assert_eq!(x.len(), m1 * m2);
        for dj in -1isize..=1 {
            for di in -1isize..=1 {
                let plane = &self.planes[((di + 1) + 3 * (dj + 1)) as usize];
                let jlo = (-dj).max(0) as usize;
                let jhi = (m2 as isize - dj.max(0)) as usize;
                let ilo = (-di).max(0) as usize;
                let ihi = (m1 as isize - di.max(0)) as usize;
                for j in jlo..jhi {
                    let row = j * m1;
                    let nrow = (j as isize + dj) as usize * m1;
                    for i in ilo..ihi {
                        let c = plane[row + i];
                        if c != 0.0 {
                            out[row + i] += c * x[nrow + (i as isize + di) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// The split semidiscrete 2D operator `A = A0 + A1 + A2` at a fixed time.
#[derive(Debug, Clone)]
pub struct SplitOperator2D {
    pub tau: f64,
    pub(crate) m1: usize,
    pub(crate) m2: usize,
    pub(crate) mixed: NinePointStencil,
    pub(crate) along_x: DirectionalOperator,
    pub(crate) along_y: DirectionalOperator,
    pub attainable_lower_y: bool,
}

impl SplitOperator2D {
    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn mixed(&self) -> &NinePointStencil {
        &self.mixed
    }

    pub fn along_x(&self) -> &DirectionalOperator {
        &self.along_x
    }

    pub fn along_y(&self) -> &DirectionalOperator {
        &self.along_y
    }

    /// `out = (A0 + A1 + A2) x`.
    pub fn apply_full(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.mixed.apply_add(x, out);
        self.along_x.apply_add(x, out);
        self.along_y.apply_add(x, out);
    }

    /// Assembles a split operator directly from raw stencil parts. Intended
    /// for tests and synthetic systems; solver code uses [`assemble_2d`].
    pub fn from_parts(
        tau: f64,
        mixed: NinePointStencil,
        along_x: DirectionalOperator,
        along_y: DirectionalOperator,
    ) -> Result<Self> {
        let (m1, m2) = (mixed.m1, mixed.m2);
        if along_x.m1 != m1
            || along_x.m2 != m2
            || along_y.m1 != m1
            || along_y.m2 != m2
            || along_x.axis != Axis::X
            || along_y.axis != Axis::Y
        {
            return Err(Error::InvalidArgument(
                "split operator parts disagree on shape or axes".to_string(),
            ));
        }
        Ok(Self {
            tau,
            m1,
            m2,
            mixed,
            along_x,
            along_y,
            attainable_lower_y: false,
        })
    }

    /// Zero-valued parts helper for building synthetic operators in tests.
    pub fn zero_parts(m1: usize, m2: usize) -> (NinePointStencil, DirectionalOperator, DirectionalOperator) {
        (
            NinePointStencil::zeros(m1, m2),
            DirectionalOperator::zeros(Axis::X, m1, m2),
            DirectionalOperator::zeros(Axis::Y, m1, m2),
        )
    }
}

struct LineCoeffs<'a, C: ?Sized> {
    inner: &'a C,
    other: f64,
    axis: Axis,
}

impl<C: Coefficients2D + ?Sized> Coefficients1D for LineCoeffs<'_, C> {
    fn drift(&self, x: f64, tau: f64) -> f64 {
        match self.axis {
            Axis::X => self.inner.drift_x(x, self.other, tau),
            Axis::Y => self.inner.drift_y(self.other, x, tau),
        }
    }
    fn diffusion(&self, x: f64, tau: f64) -> f64 {
        match self.axis {
            Axis::X => self.inner.diffusion_x(x, self.other, tau),
            Axis::Y => self.inner.diffusion_y(self.other, x, tau),
        }
    }
}

/// Assembles the split finite volume operator at time `tau`.
///
/// `attainable_lower_y` selects the one-sided treatment of mixed fluxes on
/// the corner level next to the lower y-boundary; use it when the model's
/// y-process can reach `y_min` (e.g. a square-root process violating the
/// Feller condition).
pub fn assemble_2d<C: Coefficients2D + ?Sized>(
    grid_x: &NonUniformGrid,
    grid_y: &NonUniformGrid,
    coeffs: &C,
    tau: f64,
    attainable_lower_y: bool,
) -> Result<SplitOperator2D> {
    let m1 = grid_x.len();
    let m2 = grid_y.len();
    let rho = coeffs.correlation();
    if !rho.is_finite() || !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Coefficient(format!(
            "correlation {rho} outside [-1, 1]"
        )));
    }

    // A1: 1D rows along each y-line (contiguous in the vec layout).
    let mut along_x = DirectionalOperator::zeros(Axis::X, m1, m2);
    for j in 0..m2 {
        let line = LineCoeffs {
            inner: coeffs,
            other: grid_y.nodes()[j],
            axis: Axis::X,
        };
        let op = crate::fv1d::assemble_1d(grid_x, &line, tau)?;
        let base = j * m1;
        along_x.lower[base..base + m1].copy_from_slice(&op.lower);
        along_x.main[base..base + m1].copy_from_slice(&op.main);
        along_x.upper[base..base + m1].copy_from_slice(&op.upper);
    }

    // A2: 1D rows along each x-line, scattered at stride m1.
    let mut along_y = DirectionalOperator::zeros(Axis::Y, m1, m2);
    for i in 0..m1 {
        let line = LineCoeffs {
            inner: coeffs,
            other: grid_x.nodes()[i],
            axis: Axis::Y,
        };
        let op = crate::fv1d::assemble_1d(grid_y, &line, tau)?;
        for j in 0..m2 {
            let k = i + j * m1;
            along_y.lower[k] = op.lower[j];
            along_y.main[k] = op.main[j];
            along_y.upper[k] = op.upper[j];
        }
    }

    // A0: mixed fluxes on the corner lattice, scattered flux-major so all
    // rows sharing a flux see the identical floating-point value.
    let mut mixed = NinePointStencil::zeros(m1, m2);
    if rho != 0.0 {
        let corner_x = corner_coords(grid_x);
        let corner_y = corner_coords(grid_y);
        let mut g = vec![0.0; (m1 + 1) * (m2 + 1)];
        for b in 0..=m2 {
            for a in 0..=m1 {
                let (x, y) = (corner_x[a], corner_y[b]);
                let s1 = coeffs.diffusion_x(x, y, tau);
                let s2 = coeffs.diffusion_y(x, y, tau);
                if !s1.is_finite() || !s2.is_finite() || s1 < 0.0 || s2 < 0.0 {
                    return Err(Error::Coefficient(format!(
                        "diffusion invalid at corner ({x}, {y})"
                    )));
                }
                g[a + b * (m1 + 1)] = rho * s1 * s2;
            }
        }

        let sx: Vec<f64> = (0..m1)
            .map(|i| 2.0 / (grid_x.steps()[i] + grid_x.steps()[i + 1]))
            .collect();
        let sy: Vec<f64> = (0..m2)
            .map(|j| 2.0 / (grid_y.steps()[j] + grid_y.steps()[j + 1]))
            .collect();

        let clamp1 = |v: isize| (v.max(0) as usize).min(m1 - 1);
        let clamp2 = |v: isize| (v.max(0) as usize).min(m2 - 1);
        let mut refs: Vec<(usize, usize, f64)> = Vec::with_capacity(4);

        for b in 0..=m2 {
            for a in 0..=m1 {
                let gval = g[a + b * (m1 + 1)];
                if gval == 0.0 {
                    continue;
                }
                refs.clear();
                if attainable_lower_y && b == 1 {
                    // One-sided average on the level next to the attainable
                    // boundary: uses node row 2 (1-based) only.
                    refs.push((clamp1(a as isize - 1), 1, 0.5));
                    refs.push((clamp1(a as isize), 1, 0.5));
                } else {
                    for pa in [a as isize - 1, a as isize] {
                        for pb in [b as isize - 1, b as isize] {
                            refs.push((clamp1(pa), clamp2(pb), 0.25));
                        }
                    }
                }
                for dj in 0..2usize {
                    let j = b as isize - 1 + dj as isize;
                    if j < 0 || j >= m2 as isize {
                        continue;
                    }
                    for di in 0..2usize {
                        let i = a as isize - 1 + di as isize;
                        if i < 0 || i >= m1 as isize {
                            continue;
                        }
                        let (iu, ju) = (i as usize, j as usize);
                        // Row (i, j) sees flux (a, b) with sign (-1)^(da+db)
                        // for da = a - i, db = b - j in {0, 1}; in loop terms
                        // da = 1 - di, db = 1 - dj, so the parity of di + dj
                        // carries the same sign.
                        let sign = if (di + dj) % 2 == 0 { 1.0 } else { -1.0 };
                        let scale = sign * sx[iu] * sy[ju];
                        for &(pa, pb, c) in &refs {
                            let doff = (pa as isize - i + 1) + 3 * (pb as isize - j + 1);
                            mixed.planes[doff as usize][iu + ju * m1] += scale * gval * c;
                        }
                    }
                }
            }
        }
    }

    Ok(SplitOperator2D {
        tau,
        m1,
        m2,
        mixed,
        along_x,
        along_y,
        attainable_lower_y,
    })
}

/// Corner-lattice coordinates: cell boundaries with both ends clamped onto
/// the outermost nodes (there are `m + 1` corner levels for `m` nodes).
fn corner_coords(grid: &NonUniformGrid) -> Vec<f64> {
    grid.bounds().to_vec()
}

/// Weighted column sums `w^T A` of the full split operator. Conservative up
/// to the four corner columns, which telescope to the corner values of
/// `rho sigma1 sigma2`.
pub fn weighted_column_sums_2d(
    grid_x: &NonUniformGrid,
    grid_y: &NonUniformGrid,
    op: &SplitOperator2D,
) -> Vec<f64> {
    let (m1, m2) = (op.m1, op.m2);
    let wx = grid_x.weights();
    let wy = grid_y.weights();
    let mut sums = vec![0.0; m1 * m2];

    for j in 0..m2 {
        for i in 0..m1 {
            let k = i + j * m1;
            let w = wx[i] * wy[j];
            // Directional parts.
            sums[k] += w * (op.along_x.main[k] + op.along_y.main[k]);
            if i > 0 {
                sums[k - 1] += w * op.along_x.lower[k];
            }
            if i + 1 < m1 {
                sums[k + 1] += w * op.along_x.upper[k];
            }
            if j > 0 {
                sums[k - m1] += w * op.along_y.lower[k];
            }
            if j + 1 < m2 {
                sums[k + m1] += w * op.along_y.upper[k];
            }
            // Mixed stencil.
            for dj in -1isize..=1 {
                let jj = j as isize + dj;
                if jj < 0 || jj >= m2 as isize {
                    continue;
                }
                for di in -1isize..=1 {
                    let ii = i as isize + di;
                    if ii < 0 || ii >= m1 as isize {
                        continue;
                    }
                    let c = op.mixed.planes[((di + 1) + 3 * (dj + 1)) as usize][k];
                    if c != 0.0 {
                        sums[ii as usize + jj as usize * m1] += w * c;
                    }
                }
            }
        }
    }
    sums
}

/// Largest weighted absolute row sum, the natural scale for judging how well
/// the weighted column sums vanish.
pub fn max_weighted_row_sum_2d(
    grid_x: &NonUniformGrid,
    grid_y: &NonUniformGrid,
    op: &SplitOperator2D,
) -> f64 {
    let (m1, m2) = (op.m1, op.m2);
    let wx = grid_x.weights();
    let wy = grid_y.weights();
    let mut worst = 0.0f64;
    for j in 0..m2 {
        for i in 0..m1 {
            let k = i + j * m1;
            let mut row = op.along_x.lower[k].abs()
                + op.along_x.main[k].abs()
                + op.along_x.upper[k].abs()
                + op.along_y.lower[k].abs()
                + op.along_y.main[k].abs()
                + op.along_y.upper[k].abs();
            for plane in &op.mixed.planes {
                row += plane[k].abs();
            }
            worst = worst.max(wx[i] * wy[j] * row);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform_grid(a: f64, b: f64, m: usize) -> NonUniformGrid {
        let h = (b - a) / (m - 1) as f64;
        NonUniformGrid::from_nodes((0..m).map(|i| a + i as f64 * h).collect()).unwrap()
    }

    fn heston_like() -> impl Coefficients2D {
        ClosureCoeffs2D {
            drift_x: |_x, v: f64, _| 0.02 - v / 2.0,
            drift_y: |_x, v: f64, _| 5.0 * (0.16 - v),
            diffusion_x: |_x, v: f64, _| v.max(0.0).sqrt(),
            diffusion_y: |_x, v: f64, _| 0.9 * v.max(0.0).sqrt(),
            correlation: 0.1,
        }
    }

    #[test]
    fn zero_correlation_gives_zero_mixed_stencil() {
        let gx = uniform_grid(0.0, 1.0, 6);
        let gy = uniform_grid(0.0, 2.0, 5);
        let coeffs = ClosureCoeffs2D {
            drift_x: |_, _, _| 0.1,
            drift_y: |_, _, _| -0.2,
            diffusion_x: |_, _, _| 0.3,
            diffusion_y: |_, _, _| 0.4,
            correlation: 0.0,
        };
        let op = assemble_2d(&gx, &gy, &coeffs, 0.0, false).unwrap();
        assert!(op.mixed().is_zero());
    }

    #[test]
    fn all_zero_coefficients_give_zero_operator() {
        let gx = uniform_grid(0.0, 1.0, 5);
        let gy = uniform_grid(0.0, 1.0, 4);
        let coeffs = ClosureCoeffs2D {
            drift_x: |_, _, _| 0.0,
            drift_y: |_, _, _| 0.0,
            diffusion_x: |_, _, _| 0.0,
            diffusion_y: |_, _, _| 0.0,
            correlation: 0.5,
        };
        let op = assemble_2d(&gx, &gy, &coeffs, 0.0, false).unwrap();
        let x = vec![1.0; 20];
        let mut out = vec![f64::NAN; 20];
        op.apply_full(&x, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_interior_row_is_cross_stencil_on_uniform_grids() {
        // Constant coefficients, uniform steps hx, hy: the interior mixed row
        // must reduce to rho*s1*s2/(4 hx hy) * (P_{i-1,j-1} - P_{i-1,j+1}
        // - P_{i+1,j-1} + P_{i+1,j+1}).
        let (hx, hy) = (0.2, 0.25);
        let gx = uniform_grid(0.0, 0.2 * 7.0, 8);
        let gy = uniform_grid(0.0, 0.25 * 6.0, 7);
        let (rho, s1, s2) = (-0.7, 0.4, 0.6);
        let coeffs = ClosureCoeffs2D {
            drift_x: |_, _, _| 0.0,
            drift_y: |_, _, _| 0.0,
            diffusion_x: move |_, _, _| s1,
            diffusion_y: move |_, _, _| s2,
            correlation: rho,
        };
        let op = assemble_2d(&gx, &gy, &coeffs, 0.0, false).unwrap();
        let c = rho * s1 * s2 / (4.0 * hx * hy);
        for j in 2..5 {
            for i in 2..6 {
                assert_relative_eq!(op.mixed().coefficient(i, j, -1, -1), c, max_relative = 1e-12);
                assert_relative_eq!(op.mixed().coefficient(i, j, 1, 1), c, max_relative = 1e-12);
                assert_relative_eq!(op.mixed().coefficient(i, j, -1, 1), -c, max_relative = 1e-12);
                assert_relative_eq!(op.mixed().coefficient(i, j, 1, -1), -c, max_relative = 1e-12);
                for (di, dj) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                    assert_relative_eq!(
                        op.mixed().coefficient(i, j, di, dj),
                        0.0,
                        epsilon = 1e-12 * c.abs()
                    );
                }
            }
        }
    }

    #[test]
    fn along_x_lines_match_1d_assembly() {
        let gx = NonUniformGrid::sinh_pinned(-3.4, 3.4, 0.0, 0.34, 13).unwrap();
        let gy = NonUniformGrid::sinh_pinned(0.0, 15.0, 0.0625, 0.03125, 7).unwrap();
        let coeffs = heston_like();
        let op = assemble_2d(&gx, &gy, &coeffs, 0.0, false).unwrap();
        for j in 0..gy.len() {
            let v = gy.nodes()[j];
            let line = crate::fv1d::ClosureCoeffs1D {
                drift: move |_x: f64, _| 0.02 - v / 2.0,
                diffusion: move |_x: f64, _| v.max(0.0).sqrt(),
            };
            let op1 = crate::fv1d::assemble_1d(&gx, &line, 0.0).unwrap();
            for i in 0..gx.len() {
                let k = i + j * gx.len();
                assert_eq!(op.along_x().lower[k], op1.lower[i]);
                assert_eq!(op.along_x().main[k], op1.main[i]);
                assert_eq!(op.along_x().upper[k], op1.upper[i]);
            }
        }
    }

    fn corner_sum_check(attainable: bool) {
        let gx = NonUniformGrid::sinh_pinned(-3.4, 3.4, 0.0, 0.34, 14).unwrap();
        let gy = NonUniformGrid::sinh_pinned(0.0, 15.0, 0.0348, 0.0174, 11).unwrap();
        let coeffs = ClosureCoeffs2D {
            drift_x: |x: f64, v: f64, _| 0.04 - v / 2.0 + 0.01 * x.sin(),
            drift_y: |_x, v: f64, _| 1.15 * (0.0348 - v),
            diffusion_x: |x: f64, v: f64, _| (1.0 + 0.1 * x.cos()) * v.max(0.0).sqrt(),
            diffusion_y: |_x, v: f64, _| 0.39 * v.max(0.0).sqrt(),
            correlation: -0.64,
        };
        let op = assemble_2d(&gx, &gy, &coeffs, 0.0, attainable).unwrap();
        let sums = weighted_column_sums_2d(&gx, &gy, &op);
        let scale = max_weighted_row_sum_2d(&gx, &gy, &op);
        let (m1, m2) = (gx.len(), gy.len());
        let corner = |i: usize, j: usize| {
            let x = gx.nodes()[i];
            let y = gy.nodes()[j];
            -0.64 * (1.0 + 0.1 * x.cos()) * y.max(0.0).sqrt() * 0.39 * y.max(0.0).sqrt()
        };
        for j in 0..m2 {
            for i in 0..m1 {
                let k = i + j * m1;
                let expected = match (i, j) {
                    (0, 0) => corner(0, 0),
                    (i, 0) if i == m1 - 1 => -corner(m1 - 1, 0),
                    (0, j) if j == m2 - 1 => -corner(0, m2 - 1),
                    (i, j) if i == m1 - 1 && j == m2 - 1 => corner(m1 - 1, m2 - 1),
                    _ => 0.0,
                };
                assert!(
                    (sums[k] - expected).abs() <= 1e-13 * scale.max(1.0),
                    "column ({i},{j}): sum {} vs expected {expected} (attainable = {attainable})",
                    sums[k]
                );
            }
        }
    }

    #[test]
    fn weighted_column_sums_vanish_off_corners() {
        corner_sum_check(false);
        corner_sum_check(true);
    }

    #[test]
    fn attainable_flag_changes_only_rows_near_lower_boundary() {
        let gx = NonUniformGrid::sinh_pinned(-3.4, 3.4, 0.0, 0.34, 9).unwrap();
        let gy = NonUniformGrid::sinh_pinned(0.0, 15.0, 0.0348, 0.0174, 8).unwrap();
        let coeffs = heston_like();
        let plain = assemble_2d(&gx, &gy, &coeffs, 0.0, false).unwrap();
        let biased = assemble_2d(&gx, &gy, &coeffs, 0.0, true).unwrap();
        let m1 = gx.len();
        for j in 0..gy.len() {
            for i in 0..m1 {
                let k = i + j * m1;
                let differs = (0..9).any(|p| plain.mixed.planes[p][k] != biased.mixed.planes[p][k]);
                if j <= 1 {
                    // Rows 0 and 1 own fluxes on the replaced corner level.
                    continue;
                }
                assert!(!differs, "row ({i},{j}) changed despite being away from the boundary");
            }
        }
        // And the flag must actually change something next to the boundary.
        let any_change = (0..m1).any(|i| {
            (0..9).any(|p| plain.mixed.planes[p][i] != biased.mixed.planes[p][i])
        });
        assert!(any_change);
    }

    #[test]
    fn invalid_correlation_rejected() {
        let gx = uniform_grid(0.0, 1.0, 4);
        let gy = uniform_grid(0.0, 1.0, 4);
        let coeffs = ClosureCoeffs2D {
            drift_x: |_, _, _| 0.0,
            drift_y: |_, _, _| 0.0,
            diffusion_x: |_, _, _| 1.0,
            diffusion_y: |_, _, _| 1.0,
            correlation: 1.5,
        };
        assert!(assemble_2d(&gx, &gy, &coeffs, 0.0, false).is_err());
    }

    #[test]
    fn conservation_against_corner_free_density() {
        // w . (A p) = 0 whenever the density vanishes at all four corners.
        let gx = NonUniformGrid::sinh_stretched(0.0, 3000.0, 100.0, 20.0, 12).unwrap();
        let gy = NonUniformGrid::sinh_stretched(0.0, 3000.0, 100.0, 25.0, 10).unwrap();
        let coeffs = ClosureCoeffs2D {
            drift_x: |x: f64, _, _| 0.03 * x,
            drift_y: |_, y: f64, _| 0.03 * y,
            diffusion_x: |x: f64, _, _| 0.2 * x,
            diffusion_y: |_, y: f64, _| 0.25 * y,
            correlation: -0.7,
        };
        let op = assemble_2d(&gx, &gy, &coeffs, 0.0, false).unwrap();
        let (m1, m2) = (gx.len(), gy.len());
        let mut p = vec![0.0; m1 * m2];
        for j in 1..m2 - 1 {
            for i in 1..m1 - 1 {
                p[i + j * m1] = ((i * 7 + j * 13) % 11) as f64 / 11.0 + 0.1;
            }
        }
        // Edges (non-corner) may be nonzero too.
        p[1] = 0.4;
        p[(m2 - 1) * m1 + 2] = 0.7;
        let mut out = vec![0.0; m1 * m2];
        op.apply_full(&p, &mut out);
        let mut dot = 0.0;
        let mut scale = 0.0f64;
        for j in 0..m2 {
            for i in 0..m1 {
                let w = gx.weights()[i] * gy.weights()[j];
                dot += w * out[i + j * m1];
                scale = scale.max(w * out[i + j * m1].abs());
            }
        }
        assert!(dot.abs() <= 1e-12 * scale.max(1.0), "mass leak {dot}");
    }
}
