//! Density-feedback backstepping controller for the guide robots.
//!
//! Step one picks a desired crowd velocity
//!
//! ```text
//! v_d = -(alpha grad(rho - rho*) - grad(sigma rho)) / rho - gradW * rho
//! ```
//!
//! under which the density error obeys a diffusion equation. Step two moves
//! the robots and turns their signs so that the generated field `v_r` tracks
//! `v_d`. With `v~ = v_r - v_d` and, for robot `i`,
//!
//! ```text
//! A_il = int (v~^T K_xi^i)_l dx    B_i = int v~^T K_theta^i dx
//! S    = int v~^T (rho grad(rho~) - d_t v_d) dx
//! ```
//!
//! the commands are `u_il = k_u A_il + beta_il S / A_il` and
//! `w_i = -k_w B_i - gamma_i S / B_i`, where the coupling weights `beta, gamma`
//! sum to one and vanish on small denominators.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{EvacError, Result};
use crate::field::{
    convolve_grad_potential, gradient, Bounds, Diffusivity, Grid, Potential, ScalarField,
    VectorField,
};
use crate::guidance::{wrap_angle, GuidanceKernel, RobotState};
use crate::Vec2;

/// Diffusion gain `alpha(x) > 0` of the desired density dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaSchedule {
    Constant { value: f64 },
    /// `alpha = value * max(rho, eps_rho) / rho_ref`: the gain grows with the
    /// local density, which keeps `v_d` bounded in near-empty regions.
    DensityProportional { value: f64, rho_ref: f64 },
    /// `alpha = speed * max(rho, eps_rho) / (|grad rho~| + grad_ref)`: caps the
    /// diffusive part of `v_d` at `speed` while keeping its direction.
    SpeedLimited { speed: f64, grad_ref: f64 },
}

impl AlphaSchedule {
    fn at(&self, rho: f64, grad_err: f64, eps_rho: f64) -> f64 {
        match *self {
            AlphaSchedule::SpeedLimited { speed, grad_ref } => {
                speed * rho.max(eps_rho) / (grad_err + grad_ref)
            }
            AlphaSchedule::Constant { value } => value,
            AlphaSchedule::DensityProportional { value, rho_ref } => {
                value * rho.max(eps_rho) / rho_ref
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(EvacError::config(key, "must be > 0"))
            }
        };
        match *self {
            AlphaSchedule::Constant { value } => positive("gains.alpha.value", value),
            AlphaSchedule::DensityProportional { value, rho_ref } => {
                positive("gains.alpha.value", value)?;
                positive("gains.alpha.rho_ref", rho_ref)
            }
            AlphaSchedule::SpeedLimited { speed, grad_ref } => {
                positive("gains.alpha.speed", speed)?;
                positive("gains.alpha.grad_ref", grad_ref)
            }
        }
    }
}

/// A gain shared by all robots or given per robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RobotGain {
    Uniform(f64),
    PerRobot(Vec<f64>),
}

impl RobotGain {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            RobotGain::Uniform(g) => *g,
            RobotGain::PerRobot(v) => v[i],
        }
    }

    fn validate(&self, key: &str, robots: usize) -> Result<()> {
        let sum = match self {
            RobotGain::Uniform(g) => {
                if !g.is_finite() {
                    return Err(EvacError::config(key, "must be finite"));
                }
                g * robots as f64
            }
            RobotGain::PerRobot(v) => {
                if v.len() != robots {
                    return Err(EvacError::config(
                        key,
                        format!("expected {robots} entries, got {}", v.len()),
                    ));
                }
                if v.iter().any(|g| !g.is_finite()) {
                    return Err(EvacError::config(key, "must be finite"));
                }
                v.iter().sum()
            }
        };
        if robots > 0 && sum <= 0.0 {
            return Err(EvacError::config(key, "gains must have a positive sum"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGains {
    pub alpha: AlphaSchedule,
    pub k_u: RobotGain,
    pub k_w: RobotGain,
    /// Density floor used in the division by `rho` (1/m^2).
    pub eps_rho: f64,
    /// Coupling threshold; weights on integrals below it are zero.
    pub eps_int: f64,
    pub u_max: f64,
    pub w_max: f64,
}

impl ControlGains {
    pub fn validate(&self, robots: usize) -> Result<()> {
        self.alpha.validate()?;
        self.k_u.validate("gains.k_u", robots)?;
        self.k_w.validate("gains.k_w", robots)?;
        let positive = [
            ("gains.eps_rho", self.eps_rho),
            ("gains.eps_int", self.eps_int),
            ("gains.u_max", self.u_max),
            ("gains.w_max", self.w_max),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && !v.is_nan()) {
                return Err(EvacError::config(key, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Default coupling threshold `1e-3 * c * sqrt(|Omega|)`.
    pub fn default_eps_int(kernel: &GuidanceKernel, bounds: &Bounds) -> f64 {
        1e-3 * kernel.c * bounds.area().sqrt()
    }
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            alpha: AlphaSchedule::Constant { value: 1.0 },
            k_u: RobotGain::Uniform(0.05),
            k_w: RobotGain::Uniform(0.05),
            eps_rho: 1e-4,
            eps_int: 0.225,
            u_max: 10.0,
            w_max: PI,
        }
    }
}

/// Desired crowd velocity field.
pub fn desired_velocity(
    rho: &ScalarField,
    rho_star: &ScalarField,
    gains: &ControlGains,
    sigma: &Diffusivity,
    potential: &Potential,
) -> Result<VectorField> {
    let grid = *rho.grid();
    let grad_err = gradient(&rho.sub(rho_star));
    let grad_sr = gradient(&sigma.times(rho));
    let interaction = convolve_grad_potential(potential, rho)?;
    let mut out = VectorField::zeros(grid);
    for (k, &r) in rho.values().iter().enumerate() {
        let alpha = gains.alpha.at(r, grad_err.get(k).norm(), gains.eps_rho);
        let denom = r.max(gains.eps_rho);
        let v = -(grad_err.get(k) * alpha - grad_sr.get(k)) / denom - interaction.get(k);
        if !(v.x.is_finite() && v.y.is_finite()) {
            return Err(EvacError::Controller(format!(
                "desired velocity is not finite at cell {k}"
            )));
        }
        out.set(k, v);
    }
    Ok(out)
}

/// Backward difference `(curr - prev) / dt`; zero when there is no history.
pub fn estimate_dvd_dt(prev: Option<&VectorField>, curr: &VectorField, dt: f64) -> VectorField {
    match prev {
        None => VectorField::zeros(*curr.grid()),
        Some(p) => curr.sub(p).scale(1.0 / dt),
    }
}

pub fn velocity_error(v_r: &VectorField, v_d: &VectorField) -> VectorField {
    v_r.sub(v_d)
}

/// Per-robot integrals feeding the control law.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlIntegrals {
    /// `A_il` for `l = x, y`.
    pub a: Vec<[f64; 2]>,
    pub b: Vec<f64>,
    pub s: f64,
}

impl ControlIntegrals {
    pub fn robots(&self) -> usize {
        self.b.len()
    }
}

pub fn control_integrals(
    v_tilde: &VectorField,
    robots: &RobotState,
    k: &GuidanceKernel,
    rho: &ScalarField,
    grad_rho_tilde: &VectorField,
    dvd_dt: &VectorField,
) -> ControlIntegrals {
    let grid = *v_tilde.grid();
    let area = grid.cell_area();
    let mut a = Vec::with_capacity(robots.len());
    let mut b = Vec::with_capacity(robots.len());
    for (r, th) in robots.iter() {
        let (mut ax, mut ay, mut bb) = (0.0, 0.0, 0.0);
        for (cell, x) in grid.centers().enumerate() {
            let vt = v_tilde.get(cell);
            let xi = x - r;
            let kx = k.jacobian_xi(xi, th);
            // (v~^T K_xi)_l = sum_m v~_m (K_xi)_{m,l}
            let row = vt.transpose() * kx;
            ax += row[(0, 0)];
            ay += row[(0, 1)];
            bb += vt.dot(&k.jacobian_theta(xi, th));
        }
        a.push([ax * area, ay * area]);
        b.push(bb * area);
    }
    let mut s = 0.0;
    for (cell, &r) in rho.values().iter().enumerate() {
        let w = grad_rho_tilde.get(cell) * r - dvd_dt.get(cell);
        s += v_tilde.get(cell).dot(&w);
    }
    ControlIntegrals {
        a,
        b,
        s: s * area,
    }
}

/// Coupling weights for the `S` term.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingAllocation {
    pub beta: Vec<[f64; 2]>,
    pub gamma: Vec<f64>,
}

impl CouplingAllocation {
    pub fn zeros(robots: usize) -> Self {
        Self {
            beta: vec![[0.0; 2]; robots],
            gamma: vec![0.0; robots],
        }
    }

    pub fn total(&self) -> f64 {
        self.beta.iter().flatten().sum::<f64>() + self.gamma.iter().sum::<f64>()
    }

    /// True when every weight is zero and the `S` term is dropped.
    pub fn is_fallback(&self) -> bool {
        self.beta.iter().flatten().chain(&self.gamma).all(|&w| w == 0.0)
    }
}

/// Weights proportional to `|integral|` over the entries that clear
/// `eps_int`, normalized to sum to one. All zero when none clears it.
pub fn allocate_coupling(integrals: &ControlIntegrals, eps_int: f64) -> CouplingAllocation {
    let n = integrals.robots();
    let mut alloc = CouplingAllocation::zeros(n);
    let keep = |v: f64| if v.abs() >= eps_int { v.abs() } else { 0.0 };
    let mut total = 0.0;
    for i in 0..n {
        for l in 0..2 {
            let w = keep(integrals.a[i][l]);
            alloc.beta[i][l] = w;
            total += w;
        }
        let w = keep(integrals.b[i]);
        alloc.gamma[i] = w;
        total += w;
    }
    if total > 0.0 {
        for w in alloc.beta.iter_mut().flatten().chain(alloc.gamma.iter_mut()) {
            *w /= total;
        }
    }
    alloc
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotCommand {
    pub u: Vec<Vec2>,
    pub w: Vec<f64>,
}

impl RobotCommand {
    pub fn zeros(robots: usize) -> Self {
        Self {
            u: vec![Vec2::zeros(); robots],
            w: vec![0.0; robots],
        }
    }
}

/// Velocity and turn-rate commands, clamped to `u_max` / `w_max`.
pub fn robot_controls(
    integrals: &ControlIntegrals,
    alloc: &CouplingAllocation,
    gains: &ControlGains,
) -> Result<RobotCommand> {
    let n = integrals.robots();
    if alloc.gamma.len() != n || alloc.beta.len() != n {
        return Err(EvacError::Logic(format!(
            "allocation sized for {} robots, integrals for {n}",
            alloc.gamma.len()
        )));
    }
    let s = integrals.s;
    let mut cmd = RobotCommand::zeros(n);
    for i in 0..n {
        let mut u = [0.0; 2];
        for (l, ul) in u.iter_mut().enumerate() {
            let a = integrals.a[i][l];
            *ul = gains.k_u.get(i) * a;
            let beta = alloc.beta[i][l];
            if beta != 0.0 {
                if a == 0.0 {
                    return Err(EvacError::Logic(format!(
                        "beta[{i}][{l}] = {beta} paired with a zero integral"
                    )));
                }
                *ul += beta * s / a;
            }
        }
        let mut u = Vec2::new(u[0], u[1]);
        let norm = u.norm();
        if norm > gains.u_max {
            u *= gains.u_max / norm;
        }

        let b = integrals.b[i];
        let mut w = -gains.k_w.get(i) * b;
        let gamma = alloc.gamma[i];
        if gamma != 0.0 {
            if b == 0.0 {
                return Err(EvacError::Logic(format!(
                    "gamma[{i}] = {gamma} paired with a zero integral"
                )));
            }
            w -= gamma * s / b;
        }
        cmd.u[i] = u;
        cmd.w[i] = w.clamp(-gains.w_max, gains.w_max);
    }
    Ok(cmd)
}

/// Robot kinematics: positions are projected back onto the workspace and
/// headings wrapped into `[0, 2 pi)`.
pub fn step_robots(robots: &RobotState, cmd: &RobotCommand, dt: f64, bounds: &Bounds) -> RobotState {
    RobotState {
        positions: robots
            .positions
            .iter()
            .zip(&cmd.u)
            .map(|(p, u)| bounds.project(p + u * dt))
            .collect(),
        headings: robots
            .headings
            .iter()
            .zip(&cmd.w)
            .map(|(th, w)| wrap_angle(th + w * dt))
            .collect(),
    }
}

/// Everything one controller evaluation produces.
#[derive(Debug, Clone)]
pub struct ControlStep {
    pub rho_tilde: ScalarField,
    pub v_d: VectorField,
    pub v_r: VectorField,
    pub v_tilde: VectorField,
    pub integrals: ControlIntegrals,
    pub allocation: CouplingAllocation,
    pub command: RobotCommand,
}

/// Stateful wrapper that keeps the previous `v_d` for the time derivative.
#[derive(Debug, Clone)]
pub struct Controller {
    pub gains: ControlGains,
    pub kernel: GuidanceKernel,
    /// Drop the coupling term unconditionally.
    pub force_fallback: bool,
    prev_v_d: Option<VectorField>,
}

impl Controller {
    pub fn new(gains: ControlGains, kernel: GuidanceKernel, force_fallback: bool) -> Self {
        Self {
            gains,
            kernel,
            force_fallback,
            prev_v_d: None,
        }
    }

    /// Desired field from a density estimate, without touching the history.
    pub fn desired(
        &self,
        rho: &ScalarField,
        rho_star: &ScalarField,
        sigma: &Diffusivity,
        potential: &Potential,
    ) -> Result<VectorField> {
        desired_velocity(rho, rho_star, &self.gains, sigma, potential)
    }

    /// Records `v_d` as the latest sample and returns the time derivative estimate.
    pub fn advance_history(&mut self, v_d: &VectorField, dt_ctrl: f64) -> VectorField {
        let d = estimate_dvd_dt(self.prev_v_d.as_ref(), v_d, dt_ctrl);
        self.prev_v_d = Some(v_d.clone());
        d
    }

    /// Full evaluation of the backstepping law for the current state.
    pub fn step(
        &mut self,
        rho: &ScalarField,
        rho_star: &ScalarField,
        robots: &RobotState,
        sigma: &Diffusivity,
        potential: &Potential,
        dt_ctrl: f64,
    ) -> Result<ControlStep> {
        let grid: Grid = *rho.grid();
        let rho_tilde = rho.sub(rho_star);
        let v_d = self.desired(rho, rho_star, sigma, potential)?;
        let dvd_dt = self.advance_history(&v_d, dt_ctrl);
        let v_r = crate::guidance::collective_field(robots, &self.kernel, &grid);
        let v_tilde = velocity_error(&v_r, &v_d);
        let grad_rt = gradient(&rho_tilde);
        let integrals = control_integrals(&v_tilde, robots, &self.kernel, rho, &grad_rt, &dvd_dt);
        let allocation = if self.force_fallback {
            CouplingAllocation::zeros(robots.len())
        } else {
            allocate_coupling(&integrals, self.gains.eps_int)
        };
        let command = robot_controls(&integrals, &allocation, &self.gains)?;
        Ok(ControlStep {
            rho_tilde,
            v_d,
            v_r,
            v_tilde,
            integrals,
            allocation,
            command,
        })
    }
}
