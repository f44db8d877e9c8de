//! Explicit finite-volume stepper for `d rho/dt = -div(v rho) + lap(sigma rho)`
//! with zero total flux through the boundary faces.
//!
//! Only used to cross-check the controller and the agent simulation; the
//! control loop itself never integrates the density PDE.

use super::{Grid, ScalarField, VectorField};
use crate::error::{EvacError, Result};

/// Diffusion coefficient `sigma`, constant or per cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusivity {
    Constant(f64),
    Field(ScalarField),
}

impl Diffusivity {
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Diffusivity::Constant(s) => *s,
            Diffusivity::Field(f) => f.values()[k],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Diffusivity::Constant(s) => *s,
            Diffusivity::Field(f) => f.max(),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Diffusivity::Constant(s) => *s,
            Diffusivity::Field(f) => f.min(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Diffusivity::Constant(s) => *s == 0.0,
            Diffusivity::Field(f) => f.values().iter().all(|&v| v == 0.0),
        }
    }

    /// `sigma * rho` cellwise.
    pub fn times(&self, rho: &ScalarField) -> ScalarField {
        match self {
            Diffusivity::Constant(s) => rho.scale(*s),
            Diffusivity::Field(f) => f.zip_with(rho, |a, b| a * b),
        }
    }
}

/// Largest time step accepted by [`step_fokker_planck`] for the given inputs.
pub fn stable_dt(grid: &Grid, v: &VectorField, sigma: &Diffusivity) -> f64 {
    let h = grid.dx().min(grid.dy());
    let diff = if sigma.max() > 0.0 {
        h * h / (4.0 * sigma.max())
    } else {
        f64::INFINITY
    };
    let vmax = v.max_magnitude();
    let adv = if vmax > 0.0 { 0.5 * h / vmax } else { f64::INFINITY };
    diff.min(adv)
}

/// One explicit conservative step. Advective face fluxes are upwinded on the
/// face-averaged velocity, diffusive fluxes are centered in `sigma * rho`.
pub fn step_fokker_planck(
    rho: &ScalarField,
    v: &VectorField,
    sigma: &Diffusivity,
    dt: f64,
) -> Result<ScalarField> {
    let grid = *rho.grid();
    if v.grid() != &grid {
        return Err(EvacError::Input("velocity and density grids differ".into()));
    }
    if let Diffusivity::Field(f) = sigma {
        if f.grid() != &grid {
            return Err(EvacError::Input("diffusivity and density grids differ".into()));
        }
    }
    if sigma.min() < 0.0 {
        return Err(EvacError::OracleStability("negative diffusivity".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EvacError::OracleStability(format!("dt must be > 0, got {dt}")));
    }
    let limit = stable_dt(&grid, v, sigma);
    if dt > limit * (1.0 + 1e-12) {
        return Err(EvacError::OracleStability(format!(
            "dt = {dt} exceeds the explicit stability bound {limit}"
        )));
    }

    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let r = rho.values();
    let sr = sigma.times(rho);
    let sr = sr.values();
    let (vx, vy) = (v.x(), v.y());

    let face = |a: usize, b: usize, va: f64, vb: f64, h: f64| -> f64 {
        let vf = 0.5 * (va + vb);
        let adv = if vf > 0.0 { vf * r[a] } else { vf * r[b] };
        adv - (sr[b] - sr[a]) / h
    };

    let mut out = r.to_vec();
    // x faces between (i, j) and (i + 1, j); boundary faces carry no flux.
    for j in 0..ny {
        for i in 0..nx - 1 {
            let a = grid.index(i, j);
            let b = a + 1;
            let f = face(a, b, vx[a], vx[b], dx) * dt / dx;
            out[a] -= f;
            out[b] += f;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let a = grid.index(i, j);
            let b = a + nx;
            let f = face(a, b, vy[a], vy[b], dy) * dt / dy;
            out[a] -= f;
            out[b] += f;
        }
    }
    ScalarField::from_values(grid, out)
}
