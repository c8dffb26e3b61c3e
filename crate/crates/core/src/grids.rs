//! Non-uniform spatial grids for vertex-centred finite volume discretizations.
//!
//! A grid holds `m` strictly increasing nodes `x_1 < ... < x_m`. Around each
//! node sits a finite volume cell bounded by the midpoints of adjacent nodes,
//! with the first and last cells clipped at the domain ends:
//!
//! ```text
//! step_i       = x_i - x_{i-1}                (step_1 = step_{m+1} = 0)
//! bound_{i1/2} = (x_{i-1} + x_i) / 2          (bound_{1/2} = x_1, bound_{m+1/2} = x_m)
//! w_i          = (step_i + step_{i+1}) / 2    (cell widths, trapezoid weights)
//! ```
//!
//! The weights telescope, so `sum_i w_i = x_m - x_1` and integrals of cell
//! averages against `w` are trapezoid quadratures.
//!
//! Two constructors produce smoothly graded grids via a hyperbolic-sine map
//! of a uniform auxiliary grid: [`NonUniformGrid::sinh_stretched`] concentrates
//! nodes around a focus point, [`NonUniformGrid::sinh_pinned`] additionally
//! forces one node to coincide with the focus exactly. Smooth grading keeps
//! the step increments `step_{i+1} - step_i` at second order in the local step
//! size, which central finite volume stencils need for clean convergence.

use crate::error::{Error, Result};

/// Strictly increasing node set with precomputed cell geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct NonUniformGrid {
    /// Nodes `x_1 < x_2 < ... < x_m`, stored 0-based.
    nodes: Vec<f64>,
    /// `steps[k] = nodes[k] - nodes[k-1]` for `1 <= k <= m-1`; `steps[0] = steps[m] = 0`.
    steps: Vec<f64>,
    /// Cell boundaries, length `m + 1`; `bounds[0] = x_min`, `bounds[m] = x_max`.
    bounds: Vec<f64>,
    /// Cell widths / quadrature weights, length `m`.
    weights: Vec<f64>,
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg.to_string()))
    }
}

impl NonUniformGrid {
    /// Builds a grid from explicit nodes.
    ///
    /// Requires at least 3 finite, strictly increasing nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        require(nodes.len() >= 3, "grid needs at least 3 nodes")?;
        require(
            nodes.iter().all(|x| x.is_finite()),
            "grid nodes must be finite",
        )?;
        require(
            nodes.windows(2).all(|p| p[0] < p[1]),
            "grid nodes must be strictly increasing",
        )?;

        let m = nodes.len();
        let mut steps = vec![0.0; m + 1];
        for k in 1..m {
            steps[k] = nodes[k] - nodes[k - 1];
        }
        let mut bounds = vec![0.0; m + 1];
        bounds[0] = nodes[0];
        bounds[m] = nodes[m - 1];
        for k in 1..m {
            bounds[k] = 0.5 * (nodes[k - 1] + nodes[k]);
        }
        let weights = (0..m).map(|i| 0.5 * (steps[i] + steps[i + 1])).collect();

        Ok(Self {
            nodes,
            steps,
            bounds,
            weights,
        })
    }

    /// Sinh-stretched grid on `[x_min, x_max]` concentrated around `focus`.
    ///
    /// Maps a uniform auxiliary grid through `x(xi) = focus + d * sinh(xi)`,
    /// where `d = density` controls the concentration: smaller `d` packs more
    /// nodes near the focus. The endpoints land on `x_min` and `x_max`
    /// exactly; the focus itself is generally not a node. The focus may equal
    /// an endpoint, which yields one-sided concentration.
    pub fn sinh_stretched(
        x_min: f64,
        x_max: f64,
        focus: f64,
        density: f64,
        m: usize,
    ) -> Result<Self> {
        Self::check_sinh_args(x_min, x_max, focus, density, m)?;
        let xi_l = ((x_min - focus) / density).asinh();
        let xi_r = ((x_max - focus) / density).asinh();
        let h = (xi_r - xi_l) / (m - 1) as f64;

        let mut nodes: Vec<f64> = (0..m)
            .map(|i| focus + density * (xi_l + i as f64 * h).sinh())
            .collect();
        nodes[0] = x_min;
        nodes[m - 1] = x_max;
        Self::from_nodes(nodes)
    }

    /// Sinh-stretched grid with one node placed exactly on `pin`.
    ///
    /// Uses the same map as [`Self::sinh_stretched`] but splits the auxiliary
    /// interval at the preimage of `pin` and grids each side uniformly with a
    /// node count proportional to its length. The two auxiliary spacings then
    /// differ only at second order, so grid smoothness survives the split.
    /// The pinned node is assigned exactly; endpoints are exact as well.
    pub fn sinh_pinned(x_min: f64, x_max: f64, pin: f64, density: f64, m: usize) -> Result<Self> {
        Self::check_sinh_args(x_min, x_max, pin, density, m)?;
        let xi_l = ((x_min - pin) / density).asinh();
        let xi_r = ((x_max - pin) / density).asinh();

        // Pin at (or within rounding of) an endpoint: a single uniform segment
        // starting at xi = 0 already contains the pin as its first/last node.
        let tol = 4.0 * f64::EPSILON * pin.abs().max(1.0);
        if (pin - x_min).abs() <= tol || (pin - x_max).abs() <= tol {
            let mut grid = Self::sinh_stretched(x_min, x_max, pin, density, m)?;
            if (pin - x_min).abs() <= tol {
                grid = Self::from_nodes({
                    let mut n = grid.nodes;
                    n[0] = x_min;
                    n
                })?;
            }
            return Ok(grid);
        }

        let frac = -xi_l / (xi_r - xi_l);
        let left_steps = ((m - 1) as f64 * frac).round() as usize;
        let left_steps = left_steps.clamp(1, m - 2);
        let right_steps = m - 1 - left_steps;
        let h_l = -xi_l / left_steps as f64;
        let h_r = xi_r / right_steps as f64;

        let mut nodes = Vec::with_capacity(m);
        for i in 0..m {
            let xi = if i < left_steps {
                -((left_steps - i) as f64) * h_l
            } else {
                (i - left_steps) as f64 * h_r
            };
            nodes.push(pin + density * xi.sinh());
        }
        nodes[0] = x_min;
        nodes[left_steps] = pin;
        nodes[m - 1] = x_max;
        Self::from_nodes(nodes)
    }

    fn check_sinh_args(x_min: f64, x_max: f64, focus: f64, density: f64, m: usize) -> Result<()> {
        require(m >= 3, "grid needs at least 3 nodes")?;
        require(
            x_min.is_finite() && x_max.is_finite() && focus.is_finite(),
            "grid bounds and focus must be finite",
        )?;
        require(x_min < x_max, "grid needs x_min < x_max")?;
        require(
            density.is_finite() && density > 0.0,
            "density parameter must be positive",
        )?;
        require(
            (x_min..=x_max).contains(&focus),
            "focus must lie within [x_min, x_max]",
        )
    }

    /// Number of nodes `m`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false; grids have at least 3 nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node steps, length `m + 1`, with zero padding at both ends:
    /// `steps()[k] = x_{k+1} - x_k` in 1-based node numbering.
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Cell boundaries, length `m + 1`; cell `i` spans `[bounds[i], bounds[i+1]]`.
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Cell widths, also the trapezoid quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn span(&self) -> f64 {
        self.x_max() - self.x_min()
    }

    /// Index of the cell containing `x`.
    ///
    /// A point exactly on a shared cell boundary belongs to the lower-index
    /// cell. Errors when `x` lies outside `[x_min, x_max]`.
    pub fn containing_cell(&self, x: f64) -> Result<usize> {
        require(
            x.is_finite() && x >= self.x_min() && x <= self.x_max(),
            "point lies outside the grid domain",
        )?;
        // Lowest i with x <= bounds[i + 1].
        let i = self.bounds[1..].partition_point(|&b| b < x);
        Ok(i.min(self.nodes.len() - 1))
    }

    /// Grading smoothness measure: `max_i |step_{i+1} - step_i| / max(step_i, step_{i+1})^2`
    /// over interior step pairs. Stays O(1) in `m` for smoothly graded grids,
    /// grows like `m` for rough ones.
    pub fn smoothness_ratio(&self) -> f64 {
        let m = self.nodes.len();
        let mut worst: f64 = 0.0;
        for k in 1..m - 1 {
            let a = self.steps[k];
            let b = self.steps[k + 1];
            let denom = a.max(b).powi(2);
            worst = worst.max((b - a).abs() / denom);
        }
        worst
    }
}
