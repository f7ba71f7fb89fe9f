//! Uniform 1D meshes, nodal fields and the discrete difference operators
//! shared by every solver.
//!
//! Node `i` sits at `x_left + i * h` for `i = 0..=n_cells`. Cell `i` spans
//! nodes `i` and `i + 1`; gradients live on cells, values on nodes.

use crate::error::{Error, Result};

/// Uniform mesh of an interval `(x_left, x_right)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_left: f64,
    x_right: f64,
    n_cells: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(x_left: f64, x_right: f64, n_cells: usize) -> Result<Self> {
        if !(x_left.is_finite() && x_right.is_finite()) || x_right <= x_left {
            return Err(Error::InvalidGrid(format!(
                "need x_left < x_right, got ({x_left}, {x_right})"
            )));
        }
        if n_cells < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 cells, got {n_cells}"
            )));
        }
        let h = (x_right - x_left) / n_cells as f64;
        Ok(Self {
            x_left,
            x_right,
            n_cells,
            h,
        })
    }

    /// The unit interval `(0, 1)` with `n_cells` cells.
    pub fn unit(n_cells: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n_cells)
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    /// Coordinate of node `i`. The last node is pinned to `x_right` exactly.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.x_right
        } else {
            self.x_left + i as f64 * self.h
        }
    }

    /// Midpoint of cell `i`.
    pub fn midpoint(&self, i: usize) -> f64 {
        self.x_left + (i as f64 + 0.5) * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |i| self.node(i))
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |i| self.midpoint(i))
    }

    /// Distance to the nearer endpoint of the interval.
    pub fn boundary_distance(&self, x: f64) -> f64 {
        (x - self.x_left).min(self.x_right - x)
    }
}

/// Nodal values of a function on a [`Grid1D`] at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::FieldLength {
                expected: grid.n_nodes(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_nodes()],
        }
    }

    /// Samples `func` at every node.
    pub fn from_fn(grid: Grid1D, func: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.nodes().map(func).collect(),
        }
    }

    /// The distance to the boundary, `min(x - x_left, x_right - x)`.
    pub fn boundary_distance(grid: Grid1D) -> Self {
        Self::from_fn(grid, |x| grid.boundary_distance(x).max(0.0))
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Whether both boundary values vanish (within `tol`).
    pub fn has_zero_trace(&self, tol: f64) -> bool {
        self.values[0].abs() <= tol && self.values[self.grid.n_cells()].abs() <= tol
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| op(v)).collect(),
        }
    }

    /// Node-wise `self - other`. Both fields must live on the same grid.
    pub fn difference(&self, other: &ScalarField) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Max-norm distance to `other`.
    pub fn max_distance(&self, other: &ScalarField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
    }

    fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid(
                "fields live on different grids".to_string(),
            ));
        }
        Ok(())
    }
}

/// Cell-wise forward difference `(u[i+1] - u[i]) / h`.
pub fn forward_diff(field: &ScalarField) -> Vec<f64> {
    let h = field.grid.h();
    field
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]) / h)
        .collect()
}

/// Largest absolute cell gradient.
pub fn max_gradient(field: &ScalarField) -> f64 {
    forward_diff(field)
        .into_iter()
        .fold(0.0, |acc, p| acc.max(p.abs()))
}

/// Trapezoidal L² norm.
pub fn l2_norm(field: &ScalarField) -> f64 {
    l2_norm_values(&field.values, field.grid.h())
}

pub(crate) fn l2_norm_values(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let interior: f64 = values[1..n - 1].iter().map(|v| v * v).sum();
    let ends = 0.5 * (values[0] * values[0] + values[n - 1] * values[n - 1]);
    (h * (interior + ends)).sqrt()
}

/// Trapezoidal integral of nodal values.
pub(crate) fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let interior: f64 = values[1..n - 1].iter().sum();
    h * (interior + 0.5 * (values[0] + values[n - 1]))
}
