//! Full closed-loop runs: initialization, the estimate/control/actuate/
//! integrate pipeline, and run-directory output.

use rand::Rng;
use serde::Serialize;
use serde_json::json;
use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::config::{Mode, ScenarioConfig, TargetSpec};
use crate::control::{step_robots, Controller, RobotCommand};
use crate::crowd::{
    step_humans_exact, step_humans_local_view, Behavior, HumanState, Navigation, NoiseStreams,
};
use crate::density::kde_estimate;
use crate::error::{EvacError, Result};
use crate::field::{write_scalar_csv, write_vector_csv, Bounds, Grid, ScalarField, VectorField};
use crate::guidance::{collective_field, RobotState};
use crate::metrics::{MetricsLog, MetricsRecord};
use crate::rng::{self, Domain};
use crate::Vec2;

/// Truncated Gaussian target density, renormalized on the grid.
pub fn target_density(spec: &TargetSpec, grid: &Grid) -> Result<ScalarField> {
    let c = Vec2::new(spec.center[0], spec.center[1]);
    let inv = 1.0 / (2.0 * spec.spread * spec.spread);
    let mut f = ScalarField::from_fn(*grid, |x| (-(x - c).norm_squared() * inv).exp());
    f.normalize()?;
    Ok(f)
}

/// Robot positions on a regular lattice: `ceil(sqrt n)` columns, rows filled
/// in order, each robot at the center of its lattice cell.
pub fn lattice_positions(n: usize, bounds: &Bounds) -> Vec<Vec2> {
    if n == 0 {
        return Vec::new();
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (w, h) = (bounds.width() / cols as f64, bounds.height() / rows as f64);
    (0..n)
        .map(|k| {
            let (c, r) = (k % cols, k / cols);
            Vec2::new(
                bounds.x_min + (c as f64 + 0.5) * w,
                bounds.y_min + (r as f64 + 0.5) * h,
            )
        })
        .collect()
}

/// Initial humans (uniform), robots (lattice with random headings) and target.
pub fn initialize(cfg: &ScenarioConfig) -> Result<(HumanState, RobotState, ScalarField)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let b = cfg.domain;
    let mut hr = rng::stream(cfg.seed, Domain::HumanInit, 0);
    let humans = (0..cfg.humans)
        .map(|_| {
            Vec2::new(
                hr.random_range(b.x_min..b.x_max),
                hr.random_range(b.y_min..b.y_max),
            )
        })
        .collect();
    let mut rr = rng::stream(cfg.seed, Domain::RobotInit, 0);
    let headings = (0..cfg.robots).map(|_| rr.random_range(0.0..TAU)).collect();
    let robots = RobotState::new(lattice_positions(cfg.robots, &b), headings)?;
    let target = target_density(&cfg.target, &grid)?;
    Ok((HumanState::new(humans), robots, target))
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: u64,
    pub humans: HumanState,
    pub robots: RobotState,
    pub density: ScalarField,
    /// Navigation field acting on the humans at this step.
    pub navigation: VectorField,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Violations {
    pub humans_outside: u64,
    pub robots_outside: u64,
    pub non_finite_metrics: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.humans_outside + self.robots_outside + self.non_finite_metrics
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub snapshots: Vec<Snapshot>,
    pub violations: Violations,
    pub final_humans: HumanState,
    pub final_robots: RobotState,
    /// Number of controller evaluations (zero outside guided mode).
    pub controller_calls: u64,
}

impl RunOutput {
    pub fn initial_err(&self) -> f64 {
        self.log.first().map_or(f64::NAN, |r| r.err_l2)
    }

    pub fn final_err(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |r| r.err_l2)
    }
}

/// A run aborted by a module fault, with the last consistent metrics.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub step: u64,
    pub t: f64,
    pub last_record: Option<Box<MetricsRecord>>,
    pub error: EvacError,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted at step {} (t = {}): {}", self.step, self.t, self.error)?;
        if let Some(r) = &self.last_record {
            write!(
                f,
                "; last consistent record: step {} err_l2 {} v2 {}",
                r.step, r.err_l2, r.v2
            )?;
        }
        Ok(())
    }
}

impl std::error::Error for RunFailure {}

/// Runs the scenario to its horizon.
pub fn run(cfg: &ScenarioConfig) -> std::result::Result<RunOutput, RunFailure> {
    let fail_at = |step: u64, log: &MetricsLog, error: EvacError| RunFailure {
        step,
        t: step as f64 * cfg.dt,
        last_record: log.last().cloned().map(Box::new),
        error,
    };
    let empty = MetricsLog::default();
    let (mut humans, mut robots, target) = initialize(cfg).map_err(|e| fail_at(0, &empty, e))?;
    let grid = cfg.grid().map_err(|e| fail_at(0, &empty, e))?;
    let kde = cfg.kde_config().map_err(|e| fail_at(0, &empty, e))?;
    let params = cfg.crowd.params();
    let bounds = cfg.domain;
    let mut controller = Controller::new(cfg.control_gains(), cfg.kernel, cfg.force_fallback);
    let mut noise = NoiseStreams::new(cfg.seed, cfg.humans);

    let total = cfg.total_steps();
    let ctrl_every = cfg.ctrl_every as u64;
    let snap_every = cfg.snapshot_period();
    let mut log = MetricsLog::default();
    let mut snapshots = Vec::new();
    let mut violations = Violations::default();
    let mut controller_calls = 0;
    let mut command = RobotCommand::zeros(robots.len());
    let mut nav_field = VectorField::zeros(grid);
    let mut last_ctrl: Option<u64> = None;

    for step in 0..=total {
        let t = step as f64 * cfg.dt;
        let control_now = step % ctrl_every == 0 || step == total;
        let snap_now = step > 0 && (step % snap_every == 0 || step == total);
        let mut density = None;

        if control_now {
            let dt_ctrl = last_ctrl.map_or(cfg.dt, |s| (step - s) as f64 * cfg.dt);
            last_ctrl = Some(step);
            let rho = kde_estimate(&humans.positions, &kde, &grid)
                .map_err(|e| fail_at(step, &log, e))?;
            let record = match cfg.mode {
                Mode::Guided => {
                    let ctl = controller
                        .step(&rho, &target, &robots, &params.sigma, &params.potential, dt_ctrl)
                        .map_err(|e| fail_at(step, &log, e))?;
                    controller_calls += 1;
                    command = ctl.command.clone();
                    nav_field = ctl.v_r.clone();
                    MetricsRecord::from_control(step, t, &ctl)
                }
                Mode::PerfectVelocity => {
                    let v_d = controller
                        .desired(&rho, &target, &params.sigma, &params.potential)
                        .map_err(|e| fail_at(step, &log, e))?;
                    let rt = rho.sub(&target);
                    let rec =
                        MetricsRecord::passive(step, t, &rt, &VectorField::zeros(grid), robots.len());
                    nav_field = v_d;
                    rec
                }
                Mode::NoControl => {
                    let v_d = controller
                        .desired(&rho, &target, &params.sigma, &params.potential)
                        .map_err(|e| fail_at(step, &log, e))?;
                    let rt = rho.sub(&target);
                    MetricsRecord::passive(step, t, &rt, &v_d.scale(-1.0), robots.len())
                }
            };
            if !record.is_finite() {
                violations.non_finite_metrics += 1;
            }
            log.push(record);
            density = Some(rho);
        }

        if snap_now {
            let density = match density {
                Some(d) => d,
                None => kde_estimate(&humans.positions, &kde, &grid)
                    .map_err(|e| fail_at(step, &log, e))?,
            };
            let navigation = match cfg.mode {
                Mode::Guided if !control_now => collective_field(&robots, &cfg.kernel, &grid),
                _ => nav_field.clone(),
            };
            snapshots.push(Snapshot {
                step,
                humans: humans.clone(),
                robots: robots.clone(),
                density,
                navigation,
            });
        }

        if step == total {
            break;
        }

        humans = match (cfg.mode, params.behavior) {
            (Mode::PerfectVelocity, _) => step_humans_exact(
                &humans,
                &robots,
                &cfg.kernel,
                Navigation::Field(&nav_field),
                &params,
                &cfg.avoidance,
                cfg.dt,
                &bounds,
                &mut noise,
            ),
            (mode, Behavior::ExactModel) => step_humans_exact(
                &humans,
                &robots,
                &cfg.kernel,
                if mode == Mode::Guided {
                    Navigation::Robots
                } else {
                    Navigation::Off
                },
                &params,
                &cfg.avoidance,
                cfg.dt,
                &bounds,
                &mut noise,
            ),
            (Mode::Guided, Behavior::LocalView) => step_humans_local_view(
                &humans,
                &robots,
                &cfg.kernel,
                &params,
                cfg.dt,
                &bounds,
                &mut noise,
            ),
            (_, Behavior::LocalView) => step_humans_local_view(
                &humans,
                &RobotState::empty(),
                &cfg.kernel,
                &params,
                cfg.dt,
                &bounds,
                &mut noise,
            ),
        }
        .map_err(|e| fail_at(step, &log, e))?;

        if cfg.mode == Mode::Guided {
            robots = step_robots(&robots, &command, cfg.dt, &bounds);
        }
        if !humans.all_inside(&bounds) {
            violations.humans_outside += 1;
        }
        if !robots.all_inside(&bounds) {
            violations.robots_outside += 1;
        }
    }

    Ok(RunOutput {
        log,
        snapshots,
        violations,
        final_humans: humans,
        final_robots: robots,
        controller_calls,
    })
}

/// Writes `metrics.csv`, `snapshots/` and `summary.json` into `dir`.
pub fn write_run_dir(dir: &Path, cfg: &ScenarioConfig, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir.join("snapshots"))?;
    out.log
        .write_csv(BufWriter::new(fs::File::create(dir.join("metrics.csv"))?))?;
    for s in &out.snapshots {
        let snap = dir.join("snapshots");
        write_agents_csv(
            fs::File::create(snap.join(format!("agents_{}.csv", s.step)))?,
            &s.humans.positions,
        )?;
        write_scalar_csv(
            BufWriter::new(fs::File::create(snap.join(format!("density_{}.csv", s.step)))?),
            &s.density,
        )?;
        write_vector_csv(
            BufWriter::new(fs::File::create(snap.join(format!("vr_{}.csv", s.step)))?),
            &s.navigation,
        )?;
    }
    let summary = summary_json(cfg, out);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| EvacError::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    Ok(())
}

/// Agent snapshot: header `x,y`, one row per agent.
pub fn write_agents_csv<W: std::io::Write>(w: W, positions: &[Vec2]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y"])?;
    for p in positions {
        out.write_record([p.x.to_string(), p.y.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn summary_json(cfg: &ScenarioConfig, out: &RunOutput) -> serde_json::Value {
    let last = out.log.last();
    json!({
        "config": cfg.to_json_value(),
        "seed": cfg.seed,
        "mode": cfg.mode.as_str(),
        "horizon": cfg.horizon,
        "steps": cfg.total_steps(),
        "control_records": out.log.len(),
        "initial": out.log.first().map(|r| json!({"err_l2": r.err_l2, "v1": r.v1, "v2": r.v2})),
        "final": last.map(|r| json!({
            "t": r.t,
            "err_l2": r.err_l2,
            "v1": r.v1,
            "v2": r.v2,
            "vtilde_l2": r.vtilde_l2,
        })),
        "decay_rate": out.log.decay_rate(),
        "max_err_l2": out.log.max_err(),
        "v2_non_increasing_fraction": out.log.fraction_non_increasing(|r| r.v2),
        "err_decreasing_fraction": out.log.fraction_decreasing(|r| r.err_l2),
        "fallback_steps": out.log.records.iter().filter(|r| r.fallback).count(),
        "invariant_violations": out.violations,
        "invariant_violation_total": out.violations.total(),
    })
}
