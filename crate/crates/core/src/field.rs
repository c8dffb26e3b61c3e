//! Discrete density fields: cell-average vectors plus their quadrature weights.

use crate::error::{Error, Result};
use crate::grids::NonUniformGrid;

/// Cell-average density on a 1D grid.
///
/// `values[i]` approximates the density at node `i`; `weights` are the cell
/// widths of the grid the field lives on, so `total_mass` is the trapezoid
/// quadrature of the density.
#[derive(Debug, Clone)]
pub struct DensityField1D {
    pub values: Vec<f64>,
    weights: Vec<f64>,
}

impl DensityField1D {
    pub fn new(grid: &NonUniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(
                "field length does not match grid".to_string(),
            ));
        }
        Ok(Self {
            values,
            weights: grid.weights().to_vec(),
        })
    }

    /// Dirac initial data: all mass in the cell containing `x0`, represented
    /// by its exact cell average `1 / w_k`. A point on a shared cell boundary
    /// goes to the lower-index cell. Total mass is 1 by construction.
    pub fn dirac(grid: &NonUniformGrid, x0: f64) -> Result<Self> {
        let k = grid.containing_cell(x0)?;
        let mut values = vec![0.0; grid.len()];
        values[k] = 2.0 / (grid.steps()[k] + grid.steps()[k + 1]);
        Self::new(grid, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Trapezoid quadrature of the density over the domain.
    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum()
    }
}

/// Cell-average density on a 2D tensor grid, stored column-stacked:
/// `values[i + j * m1]` is the value at x-node `i`, y-node `j`. That layout
/// matches the vectorized operator convention used by the split 2D stencils
/// (successive y-slices of the field stacked below each other).
#[derive(Debug, Clone)]
pub struct DensityField2D {
    pub values: Vec<f64>,
    m1: usize,
    m2: usize,
    wx: Vec<f64>,
    wy: Vec<f64>,
}

impl DensityField2D {
    pub fn new(gx: &NonUniformGrid, gy: &NonUniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != gx.len() * gy.len() {
            return Err(Error::InvalidArgument(
                "field length does not match grid product".to_string(),
            ));
        }
        Ok(Self {
            values,
            m1: gx.len(),
            m2: gy.len(),
            wx: gx.weights().to_vec(),
            wy: gy.weights().to_vec(),
        })
    }

    /// Dirac initial data at `(x0, y0)`: the containing cell gets the
    /// reciprocal of its volume `1 / (w_i * w_j)`, everything else zero.
    /// Boundary ties break to the lower index in each direction.
    pub fn dirac(gx: &NonUniformGrid, gy: &NonUniformGrid, x0: f64, y0: f64) -> Result<Self> {
        let i = gx.containing_cell(x0)?;
        let j = gy.containing_cell(y0)?;
        let mut values = vec![0.0; gx.len() * gy.len()];
        let sx = 2.0 / (gx.steps()[i] + gx.steps()[i + 1]);
        let sy = 2.0 / (gy.steps()[j] + gy.steps()[j + 1]);
        values[i + j * gx.len()] = sx * sy;
        Self::new(gx, gy, values)
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i + j * self.m1]
    }

    pub fn weights_x(&self) -> &[f64] {
        &self.wx
    }

    pub fn weights_y(&self) -> &[f64] {
        &self.wy
    }

    /// Tensor trapezoid quadrature of the density over the domain.
    pub fn total_mass(&self) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.m2 {
            let mut row = 0.0;
            for i in 0..self.m1 {
                row += self.values[i + j * self.m1] * self.wx[i];
            }
            sum += row * self.wy[j];
        }
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d() -> NonUniformGrid {
        NonUniformGrid::sinh_stretched(0.0, 3000.0, 100.0, 20.0, 50).unwrap()
    }

    #[test]
    fn dirac_1d_has_unit_mass() {
        let g = grid_1d();
        for x0 in [100.0, 0.0, 3000.0, 1234.5678] {
            let f = DensityField1D::dirac(&g, x0).unwrap();
            assert!((f.total_mass() - 1.0).abs() < 1e-15);
            assert_eq!(f.values.iter().filter(|&&v| v != 0.0).count(), 1);
        }
    }

    #[test]
    fn dirac_1d_boundary_tie_goes_low() {
        let g = NonUniformGrid::from_nodes(vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        // Shared boundary of cells 1 and 2 is at 1.5.
        let f = DensityField1D::dirac(&g, 1.5).unwrap();
        assert!(f.values[1] > 0.0);
        assert_eq!(f.values[2], 0.0);
    }

    #[test]
    fn dirac_2d_value_is_reciprocal_cell_volume() {
        let gx = NonUniformGrid::sinh_pinned(-3.4, 3.4, 0.0, 0.34, 21).unwrap();
        let gy = NonUniformGrid::sinh_pinned(0.0, 15.0, 0.0625, 0.03125, 11).unwrap();
        let f = DensityField2D::dirac(&gx, &gy, 0.0, 0.0625).unwrap();
        let i = gx.containing_cell(0.0).unwrap();
        let j = gy.containing_cell(0.0625).unwrap();
        let vol = gx.weights()[i] * gy.weights()[j];
        assert!((f.at(i, j) * vol - 1.0).abs() < 1e-14);
        assert!((f.total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn total_mass_of_constant_field_is_domain_area() {
        let gx = NonUniformGrid::from_nodes(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let gy = NonUniformGrid::from_nodes(vec![0.0, 0.5, 1.0]).unwrap();
        let c = 2.5;
        let f = DensityField2D::new(&gx, &gy, vec![c; 12]).unwrap();
        assert!((f.total_mass() - c * 3.0 * 1.0).abs() < 1e-12);

        let zero = DensityField2D::new(&gx, &gy, vec![0.0; 12]).unwrap();
        assert_eq!(zero.total_mass(), 0.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let g = grid_1d();
        assert!(DensityField1D::new(&g, vec![0.0; 3]).is_err());
    }
}
