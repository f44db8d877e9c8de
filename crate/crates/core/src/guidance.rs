//! Robot sign kernels and the navigation velocity field they generate.
//!
//! A robot at `R` showing a sign with heading `theta` induces the velocity
//! `K(x - R, theta) = Kbar(x - R) [cos theta, sin theta]` with the Gaussian
//! profile `Kbar(xi) = c exp(-|xi|^2 / eta)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{EvacError, Result};
use crate::field::{Bounds, Grid, VectorField};
use crate::{Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceKernel {
    /// Peak guided speed (m/s).
    pub c: f64,
    /// Range parameter (m^2); `Kbar = c/e` at distance `sqrt(eta)`.
    pub eta: f64,
}

impl Default for GuidanceKernel {
    fn default() -> Self {
        Self { c: 1.5, eta: 500.0 }
    }
}

impl GuidanceKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(EvacError::config("kernel.c", "must be > 0"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(EvacError::config("kernel.eta", "must be > 0"));
        }
        Ok(())
    }

    #[inline]
    pub fn kbar(&self, xi: Vec2) -> f64 {
        self.c * (-xi.norm_squared() / self.eta).exp()
    }

    /// Distance at which the profile falls to `eps`; zero if `eps >= c`.
    pub fn radius_for(&self, eps: f64) -> f64 {
        if eps >= self.c {
            0.0
        } else {
            (self.eta * (self.c / eps).ln()).sqrt()
        }
    }

    #[inline]
    pub fn velocity(&self, xi: Vec2, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c, s) * self.kbar(xi)
    }

    /// `dK/dxi`: rows are components of `K`, columns derivatives in `xi_l`.
    #[inline]
    pub fn jacobian_xi(&self, xi: Vec2, theta: f64) -> Mat2 {
        let (s, c) = theta.sin_cos();
        let k = -2.0 / self.eta * self.kbar(xi);
        Vec2::new(c, s) * xi.transpose() * k
    }

    /// `dK/dtheta`.
    #[inline]
    pub fn jacobian_theta(&self, xi: Vec2, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(-s, c) * self.kbar(xi)
    }
}

pub fn kbar(xi: Vec2, k: &GuidanceKernel) -> f64 {
    k.kbar(xi)
}

/// Velocity induced at `x` by a single robot.
pub fn guidance_velocity(x: Vec2, robot: Vec2, theta: f64, k: &GuidanceKernel) -> Vec2 {
    k.velocity(x - robot, theta)
}

pub fn kernel_jacobian_xi(xi: Vec2, theta: f64, k: &GuidanceKernel) -> Mat2 {
    k.jacobian_xi(xi, theta)
}

pub fn kernel_jacobian_theta(xi: Vec2, theta: f64, k: &GuidanceKernel) -> Vec2 {
    k.jacobian_theta(xi, theta)
}

/// Wraps an angle into `[0, 2 pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Robot positions and sign headings.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub positions: Vec<Vec2>,
    pub headings: Vec<f64>,
}

impl RobotState {
    pub fn new(positions: Vec<Vec2>, headings: Vec<f64>) -> Result<Self> {
        if positions.len() != headings.len() {
            return Err(EvacError::Input(format!(
                "{} robot positions but {} headings",
                positions.len(),
                headings.len()
            )));
        }
        let headings = headings.into_iter().map(wrap_angle).collect();
        Ok(Self {
            positions,
            headings,
        })
    }

    pub fn empty() -> Self {
        Self {
            positions: Vec::new(),
            headings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        self.positions.iter().copied().zip(self.headings.iter().copied())
    }

    pub fn all_inside(&self, bounds: &Bounds) -> bool {
        self.positions.iter().all(|p| bounds.contains(*p))
    }

    /// Collective navigation velocity `sum_i K(x - R_i, theta_i)` at one point.
    pub fn velocity_at(&self, x: Vec2, k: &GuidanceKernel) -> Vec2 {
        self.iter()
            .fold(Vec2::zeros(), |acc, (r, th)| acc + k.velocity(x - r, th))
    }
}

/// Navigation velocity field of all robots sampled at cell centers.
pub fn collective_field(robots: &RobotState, k: &GuidanceKernel, grid: &Grid) -> VectorField {
    VectorField::from_fn(*grid, |x| robots.velocity_at(x, k))
}

/// Field of a single robot, used for coverage checks.
pub fn robot_field(robot: Vec2, theta: f64, k: &GuidanceKernel, grid: &Grid) -> VectorField {
    VectorField::from_fn(*grid, |x| k.velocity(x - robot, theta))
}
