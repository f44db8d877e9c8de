//! Cell-centered rectangular grids and the fields sampled on them.
//!
//! Values are stored row-major with the y index outermost: the value of cell
//! `(i, j)` (column `i`, row `j`) lives at `j * nx + i`. Every reduction walks
//! that order sequentially so results are bitwise reproducible.

mod calculus;
mod convolution;
mod fokker_planck;
mod io;

pub use calculus::{divergence, gradient, laplacian};
pub use convolution::{convolve_grad_potential, Potential};
pub use fokker_planck::{stable_dt, step_fokker_planck, Diffusivity};
pub use io::{read_scalar_csv, read_vector_csv, write_scalar_csv, write_vector_csv};

use crate::error::{EvacError, Result};
use crate::Vec2;
use serde::{Deserialize, Serialize};

/// Axis-aligned workspace bounds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn square(side: f64) -> Self {
        Self::new(0.0, side, 0.0, side)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Orthogonal projection onto the closed rectangle.
    pub fn project(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
        )
    }
}

/// Rectangular discretization of the workspace into `nx * ny` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    bounds: Bounds,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

impl Grid {
    /// Builds a grid; at least three cells per axis are required so every
    /// cell has a second-order stencil.
    pub fn new(bounds: Bounds, nx: usize, ny: usize) -> Result<Self> {
        let finite = [bounds.x_min, bounds.x_max, bounds.y_min, bounds.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || bounds.x_max <= bounds.x_min {
            return Err(EvacError::config(
                "domain.x",
                format!("need x_min < x_max, got [{}, {}]", bounds.x_min, bounds.x_max),
            ));
        }
        if bounds.y_max <= bounds.y_min {
            return Err(EvacError::config(
                "domain.y",
                format!("need y_min < y_max, got [{}, {}]", bounds.y_min, bounds.y_max),
            ));
        }
        if nx < 3 {
            return Err(EvacError::config("nx", format!("need at least 3 cells, got {nx}")));
        }
        if ny < 3 {
            return Err(EvacError::config("ny", format!("need at least 3 cells, got {ny}")));
        }
        Ok(Self {
            bounds,
            nx,
            ny,
            dx: bounds.width() / nx as f64,
            dy: bounds.height() / ny as f64,
        })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center_x(&self, i: usize) -> f64 {
        self.bounds.x_min + (i as f64 + 0.5) * self.dx
    }

    #[inline]
    pub fn center_y(&self, j: usize) -> f64 {
        self.bounds.y_min + (j as f64 + 0.5) * self.dy
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.center_x(i), self.center_y(j))
    }

    /// Cell centers in storage order.
    pub fn centers(&self) -> impl Iterator<Item = Vec2> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| self.center(i, j)))
    }

    /// The cell containing `p`; points on the upper boundary map to the last cell.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        if !self.bounds.contains(p) {
            return None;
        }
        let i = (((p.x - self.bounds.x_min) / self.dx) as usize).min(self.nx - 1);
        let j = (((p.y - self.bounds.y_min) / self.dy) as usize).min(self.ny - 1);
        Some((i, j))
    }

    fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }
}

/// A real value per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(EvacError::Input(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(Vec2) -> f64) -> Self {
        let values = grid.centers().map(&mut f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
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

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid.same_shape(&other.grid), "fields live on different grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Midpoint-rule integral `sum(values) * dx * dy`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    /// Rescales so the midpoint integral is one. Returns the mass before scaling.
    pub fn normalize(&mut self) -> Result<f64> {
        let mass = self.integral();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(EvacError::Estimation(format!(
                "cannot normalize a field with mass {mass}"
            )));
        }
        let inv = 1.0 / mass;
        self.values.iter_mut().for_each(|v| *v *= inv);
        Ok(mass)
    }

    /// Bilinear interpolation between cell centers, constant extrapolation in
    /// the half cell next to the boundary.
    pub fn sample(&self, p: Vec2) -> f64 {
        let (i0, i1, tx) = interp_axis(p.x, self.grid.bounds.x_min, self.grid.dx, self.grid.nx);
        let (j0, j1, ty) = interp_axis(p.y, self.grid.bounds.y_min, self.grid.dy, self.grid.ny);
        let v00 = self.at(i0, j0);
        let v10 = self.at(i1, j0);
        let v01 = self.at(i0, j1);
        let v11 = self.at(i1, j1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }
}

fn interp_axis(x: f64, origin: f64, h: f64, n: usize) -> (usize, usize, f64) {
    let s = (x - origin) / h - 0.5;
    if s <= 0.0 {
        return (0, 0, 0.0);
    }
    let last = (n - 1) as f64;
    if s >= last {
        return (n - 1, n - 1, 0.0);
    }
    let i0 = s.floor() as usize;
    (i0, i0 + 1, s - i0 as f64)
}

/// A 2-vector per grid cell, stored as two component arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn from_components(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.len() || y.len() != grid.len() {
            return Err(EvacError::Input(format!(
                "vector field components have {}/{} values, grid has {} cells",
                x.len(),
                y.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, x, y })
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(Vec2) -> Vec2) -> Self {
        let mut out = Self::zeros(grid);
        for (k, c) in grid.centers().enumerate() {
            let v = f(c);
            out.x[k] = v.x;
            out.y[k] = v.y;
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn components_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.x, &mut self.y)
    }

    #[inline]
    pub fn get(&self, k: usize) -> Vec2 {
        Vec2::new(self.x[k], self.y[k])
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Vec2 {
        self.get(self.grid.index(i, j))
    }

    #[inline]
    pub fn set(&mut self, k: usize, v: Vec2) {
        self.x[k] = v.x;
        self.y[k] = v.y;
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    pub fn zip_with(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid.same_shape(&other.grid), "fields live on different grids");
        Self {
            grid: self.grid,
            x: self.x.iter().zip(&other.x).map(|(&a, &b)| f(a, b)).collect(),
            y: self.y.iter().zip(&other.y).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &VectorField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            x: self.x.iter().map(|v| a * v).collect(),
            y: self.y.iter().map(|v| a * v).collect(),
        }
    }

    /// Cellwise Euclidean norm.
    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        }
    }

    /// Cellwise dot product with another field.
    pub fn dot(&self, other: &VectorField) -> ScalarField {
        assert!(self.grid.same_shape(&other.grid), "fields live on different grids");
        ScalarField {
            grid: self.grid,
            values: (0..self.grid.len())
                .map(|k| self.x[k] * other.x[k] + self.y[k] * other.y[k])
                .collect(),
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        let sum: f64 = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a * a + b * b)
            .sum();
        (sum * self.grid.cell_area()).sqrt()
    }

    pub fn sample(&self, p: Vec2) -> Vec2 {
        let g = &self.grid;
        let (i0, i1, tx) = interp_axis(p.x, g.bounds.x_min, g.dx, g.nx);
        let (j0, j1, ty) = interp_axis(p.y, g.bounds.y_min, g.dy, g.ny);
        let lerp = |c: &[f64]| {
            let v00 = c[g.index(i0, j0)];
            let v10 = c[g.index(i1, j0)];
            let v01 = c[g.index(i0, j1)];
            let v11 = c[g.index(i1, j1)];
            (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
        };
        Vec2::new(lerp(&self.x), lerp(&self.y))
    }
}

/// Midpoint-rule integral of a scalar field.
pub fn riemann_integral(f: &ScalarField) -> f64 {
    f.integral()
}

/// Cell mask of `{x : |f(x)| > eps}`.
pub fn support_mass_set(f: &VectorField, eps: f64) -> Vec<bool> {
    f.x.iter()
        .zip(&f.y)
        .map(|(a, b)| a.hypot(*b) > eps)
        .collect()
}
