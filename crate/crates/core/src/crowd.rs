//! Agent-level human dynamics.
//!
//! Two behaviors are available. The exact model integrates
//! `dX = (interaction + v_r + v_a) dt + sqrt(2 sigma) dB` with Euler-Maruyama.
//! The local-view model follows the instruction of the nearest visible robot
//! and wanders randomly when no robot is in view.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{EvacError, Result};
use crate::field::{Bounds, Diffusivity, Potential, VectorField};
use crate::guidance::{GuidanceKernel, RobotState};
use crate::rng::{self, Domain};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    #[default]
    ExactModel,
    LocalView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrowdParams {
    pub sigma: Diffusivity,
    pub potential: Potential,
    pub behavior: Behavior,
    /// Radius within which a robot's sign is seen (local-view only).
    pub view_range: f64,
    /// Wandering speed when no robot is visible (local-view only).
    pub random_speed: f64,
}

impl Default for CrowdParams {
    fn default() -> Self {
        Self {
            sigma: Diffusivity::Constant(2.0),
            potential: Potential::Zero,
            behavior: Behavior::ExactModel,
            view_range: 30.0,
            random_speed: 1.2,
        }
    }
}

/// Velocity added by humans stepping out of a robot's way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvoidancePolicy {
    pub enabled: bool,
    pub radius: f64,
    pub v_max: f64,
}

impl Default for AvoidancePolicy {
    fn default() -> Self {
        Self {
            enabled: false,
            radius: 5.0,
            v_max: 0.5,
        }
    }
}

impl AvoidancePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(EvacError::config("avoidance.radius", "must be > 0"));
        }
        if !(self.v_max >= 0.0 && self.v_max.is_finite()) {
            return Err(EvacError::config("avoidance.v_max", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanState {
    pub positions: Vec<Vec2>,
}

impl HumanState {
    pub fn new(positions: Vec<Vec2>) -> Self {
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn all_inside(&self, bounds: &Bounds) -> bool {
        self.positions.iter().all(|p| bounds.contains(*p))
    }
}

/// One independent random stream per agent.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    streams: Vec<ChaCha8Rng>,
}

impl NoiseStreams {
    pub fn new(seed: u64, agents: usize) -> Self {
        Self {
            streams: (0..agents as u64)
                .map(|j| rng::stream(seed, Domain::HumanNoise, j))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    fn agent(&mut self, j: usize) -> &mut ChaCha8Rng {
        &mut self.streams[j]
    }
}

/// Where the guided part of the drift comes from.
#[derive(Debug, Clone, Copy)]
pub enum Navigation<'a> {
    /// Analytic field of the robots' signs at each agent.
    Robots,
    /// A prescribed grid field, sampled bilinearly.
    Field(&'a VectorField),
    Off,
}

/// Reflects a point across the boundary until it lies inside the rectangle.
pub fn reflect_into(bounds: &Bounds, p: Vec2) -> Vec2 {
    let axis = |mut v: f64, lo: f64, hi: f64| {
        for _ in 0..8 {
            if v < lo {
                v = 2.0 * lo - v;
            } else if v > hi {
                v = 2.0 * hi - v;
            } else {
                return v;
            }
        }
        v.clamp(lo, hi)
    };
    Vec2::new(
        axis(p.x, bounds.x_min, bounds.x_max),
        axis(p.y, bounds.y_min, bounds.y_max),
    )
}

/// Sum of outward pushes from robots closer than `policy.radius`, clamped to
/// `policy.v_max`. An agent on top of a robot is pushed along +x.
pub fn avoidance_velocity(x: Vec2, robots: &RobotState, policy: &AvoidancePolicy) -> Vec2 {
    if !policy.enabled {
        return Vec2::zeros();
    }
    let mut v = Vec2::zeros();
    for r in &robots.positions {
        let d = (x - r).norm();
        if d >= policy.radius {
            continue;
        }
        let dir = if d > 0.0 { (x - r) / d } else { Vec2::new(1.0, 0.0) };
        v += dir * (policy.v_max * (1.0 - d / policy.radius));
    }
    let n = v.norm();
    if n > policy.v_max {
        v *= policy.v_max / n;
    }
    v
}

fn sigma_at(sigma: &Diffusivity, p: Vec2) -> f64 {
    match sigma {
        Diffusivity::Constant(s) => *s,
        Diffusivity::Field(f) => f.sample(p).max(0.0),
    }
}

/// One Euler-Maruyama step of the exact human model.
///
/// The pairwise term uses the same orientation as the mean-field convolution,
/// `(1/N) sum_k grad W(X_j - X_k)`, with the self term dropped.
#[allow(clippy::too_many_arguments)]
pub fn step_humans_exact(
    humans: &HumanState,
    robots: &RobotState,
    kernel: &GuidanceKernel,
    navigation: Navigation<'_>,
    params: &CrowdParams,
    avoid: &AvoidancePolicy,
    dt: f64,
    bounds: &Bounds,
    noise: &mut NoiseStreams,
) -> Result<HumanState> {
    let n = humans.len();
    if noise.len() != n {
        return Err(EvacError::Input(format!(
            "{} noise streams for {} agents",
            noise.len(),
            n
        )));
    }
    let inv_n = 1.0 / n as f64;
    let sqrt_dt = dt.sqrt();
    let mut next = Vec::with_capacity(n);
    for (j, &x) in humans.positions.iter().enumerate() {
        let mut drift = match navigation {
            Navigation::Robots => robots.velocity_at(x, kernel),
            Navigation::Field(f) => f.sample(x),
            Navigation::Off => Vec2::zeros(),
        };
        if !params.potential.is_zero() {
            let mut pair = Vec2::zeros();
            for (k, &y) in humans.positions.iter().enumerate() {
                if k != j {
                    pair += params.potential.gradient(x - y);
                }
            }
            drift += pair * inv_n;
        }
        drift += avoidance_velocity(x, robots, avoid);

        let mut step = drift * dt;
        let s = sigma_at(&params.sigma, x);
        if s > 0.0 {
            let rng = noise.agent(j);
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            step += Vec2::new(zx, zy) * ((2.0 * s).sqrt() * sqrt_dt);
        }
        let moved = x + step;
        if !(moved.x.is_finite() && moved.y.is_finite()) {
            return Err(EvacError::Integration(format!(
                "agent {j} left the reals at step from ({}, {})",
                x.x, x.y
            )));
        }
        next.push(reflect_into(bounds, moved));
    }
    Ok(HumanState::new(next))
}

/// Index of the nearest robot within `range`; ties go to the lower index.
pub fn nearest_visible_robot(x: Vec2, robots: &RobotState, range: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in robots.positions.iter().enumerate() {
        let d2 = (x - r).norm_squared();
        if d2 > range * range {
            continue;
        }
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i)
}

/// One step of the local-view behavior.
pub fn step_humans_local_view(
    humans: &HumanState,
    robots: &RobotState,
    kernel: &GuidanceKernel,
    params: &CrowdParams,
    dt: f64,
    bounds: &Bounds,
    noise: &mut NoiseStreams,
) -> Result<HumanState> {
    if noise.len() != humans.len() {
        return Err(EvacError::Input(format!(
            "{} noise streams for {} agents",
            noise.len(),
            humans.len()
        )));
    }
    let mut next = Vec::with_capacity(humans.len());
    for (j, &x) in humans.positions.iter().enumerate() {
        let v = match nearest_visible_robot(x, robots, params.view_range) {
            Some(i) => kernel.velocity(x - robots.positions[i], robots.headings[i]),
            None => {
                let phi: f64 = noise.agent(j).random_range(0.0..TAU);
                let (s, c) = phi.sin_cos();
                Vec2::new(c, s) * params.random_speed
            }
        };
        let moved = x + v * dt;
        if !(moved.x.is_finite() && moved.y.is_finite()) {
            return Err(EvacError::Integration(format!("agent {j} left the reals")));
        }
        next.push(reflect_into(bounds, moved));
    }
    Ok(HumanState::new(next))
}
