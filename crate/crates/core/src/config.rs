//! Scenario configuration: JSON schema, presets and validation.
//!
//! A configuration document is a JSON object. The scalar run parameters
//! (`domain`, `nx`, `ny`, `humans`, `robots`, `dt`, `horizon`, `target`) are
//! required; every section has defaults. Unknown keys are rejected and every
//! error names the dotted path of the offending entry.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::f64::consts::PI;

use crate::control::{AlphaSchedule, ControlGains, RobotGain};
use crate::crowd::{AvoidancePolicy, Behavior, CrowdParams};
use crate::density::KdeConfig;
use crate::error::{EvacError, Result};
use crate::field::{Bounds, Diffusivity, Grid, Potential};
use crate::guidance::GuidanceKernel;

pub const PRESET_NAMES: &[&str] = &["paper-sec5"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Robots run the backstepping controller and humans follow their signs.
    #[default]
    Guided,
    /// Humans follow the desired field `v_d` directly; robots are idle.
    PerfectVelocity,
    /// No navigation field at all.
    NoControl,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "guided" => Some(Mode::Guided),
            "perfect-velocity" => Some(Mode::PerfectVelocity),
            "no-control" => Some(Mode::NoControl),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Guided => "guided",
            Mode::PerfectVelocity => "perfect-velocity",
            Mode::NoControl => "no-control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub center: [f64; 2],
    /// Standard deviation of the Gaussian target (m).
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrowdConfig {
    /// Constant diffusion coefficient (m^2/s).
    pub sigma: f64,
    pub potential: Potential,
    pub behavior: Behavior,
    pub view_range: f64,
    pub random_speed: f64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            potential: Potential::Zero,
            behavior: Behavior::ExactModel,
            view_range: 30.0,
            random_speed: 1.2,
        }
    }
}

impl CrowdConfig {
    pub fn params(&self) -> CrowdParams {
        CrowdParams {
            sigma: Diffusivity::Constant(self.sigma),
            potential: self.potential,
            behavior: self.behavior,
            view_range: self.view_range,
            random_speed: self.random_speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub alpha: AlphaSchedule,
    pub k_u: RobotGain,
    pub k_w: RobotGain,
    pub eps_rho: f64,
    /// `None` selects `1e-3 * c * sqrt(|Omega|)`.
    pub eps_int: Option<f64>,
    pub u_max: f64,
    pub w_max: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        let g = ControlGains::default();
        Self {
            alpha: g.alpha,
            k_u: g.k_u,
            k_w: g.k_w,
            eps_rho: g.eps_rho,
            eps_int: None,
            u_max: g.u_max,
            w_max: g.w_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RobotLayout {
    /// Regular lattice, `ceil(sqrt n)` columns, filled row by row.
    #[default]
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: Bounds,
    pub nx: usize,
    pub ny: usize,
    pub humans: usize,
    pub robots: usize,
    /// Physics time step (s).
    pub dt: f64,
    /// Simulated horizon (s).
    pub horizon: f64,
    pub target: TargetSpec,
    #[serde(default)]
    pub seed: u64,
    /// Controller period in physics steps.
    #[serde(default = "one")]
    pub ctrl_every: usize,
    /// Snapshot period in physics steps; `None` gives ten snapshots per run.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub crowd: CrowdConfig,
    #[serde(default)]
    pub kernel: GuidanceKernel,
    #[serde(default)]
    pub gains: GainsConfig,
    #[serde(default)]
    pub kde: Option<KdeConfig>,
    #[serde(default)]
    pub avoidance: AvoidancePolicy,
    /// Drop the coupling term at every control step.
    #[serde(default)]
    pub force_fallback: bool,
    #[serde(default)]
    pub robot_layout: RobotLayout,
}

fn one() -> usize {
    1
}

impl ScenarioConfig {
    /// Looks up a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-sec5" => Ok(Self::paper_sec5()),
            other => Err(EvacError::config(
                "preset",
                format!("unknown preset `{other}` (known: {})", PRESET_NAMES.join(", ")),
            )),
        }
    }

    /// 200 humans and 16 robots on a 150 m square discretized 30 x 30,
    /// Euler step 0.01 s, narrow Gaussian target in the upper-right corner.
    pub fn paper_sec5() -> Self {
        Self {
            domain: Bounds::square(150.0),
            nx: 30,
            ny: 30,
            humans: 200,
            robots: 16,
            dt: 0.01,
            horizon: 100.0,
            target: TargetSpec {
                center: [135.0, 135.0],
                spread: 30.0,
            },
            seed: 0,
            ctrl_every: 1,
            snapshot_every: None,
            mode: Mode::Guided,
            crowd: CrowdConfig {
                sigma: 0.0,
                ..CrowdConfig::default()
            },
            kernel: GuidanceKernel::default(),
            gains: GainsConfig {
                alpha: AlphaSchedule::Constant { value: 50.0 },
                k_u: RobotGain::Uniform(0.05),
                k_w: RobotGain::Uniform(0.03),
                ..GainsConfig::default()
            },
            kde: Some(KdeConfig {
                bandwidth: 25.0,
                renormalize: true,
            }),
            avoidance: AvoidancePolicy::default(),
            force_fallback: false,
            robot_layout: RobotLayout::Lattice,
        }
    }

    /// Parses a JSON document, reporting the path of any schema violation,
    /// then validates value ranges.
    pub fn from_json_value(value: Value) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            EvacError::config(if path == "." { "<root>".into() } else { path }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| EvacError::config("<root>", format!("malformed JSON: {e}")))?;
        Self::from_json_value(value)
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.domain, self.nx, self.ny)
    }

    pub fn kde_config(&self) -> Result<KdeConfig> {
        Ok(match self.kde {
            Some(k) => k,
            None => KdeConfig::for_grid(&self.grid()?),
        })
    }

    pub fn control_gains(&self) -> ControlGains {
        ControlGains {
            alpha: self.gains.alpha,
            k_u: self.gains.k_u.clone(),
            k_w: self.gains.k_w.clone(),
            eps_rho: self.gains.eps_rho,
            eps_int: self
                .gains
                .eps_int
                .unwrap_or_else(|| ControlGains::default_eps_int(&self.kernel, &self.domain)),
            u_max: self.gains.u_max,
            w_max: self.gains.w_max,
        }
    }

    pub fn total_steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    pub fn snapshot_period(&self) -> u64 {
        match self.snapshot_every {
            Some(s) => s as u64,
            None => (self.total_steps() / 10).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(EvacError::config(key, format!("must be > 0, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        if self.humans == 0 {
            return Err(EvacError::config("humans", "need at least one human"));
        }
        if self.mode == Mode::Guided && self.robots == 0 {
            return Err(EvacError::config("robots", "guided mode needs at least one robot"));
        }
        if self.ctrl_every == 0 {
            return Err(EvacError::config("ctrl_every", "must be >= 1"));
        }
        if self.snapshot_every == Some(0) {
            return Err(EvacError::config("snapshot_every", "must be >= 1"));
        }
        if self.horizon < self.dt {
            return Err(EvacError::config("horizon", "shorter than one time step"));
        }
        let [cx, cy] = self.target.center;
        if !grid.bounds().contains(crate::Vec2::new(cx, cy)) {
            return Err(EvacError::config("target.center", "must lie inside the domain"));
        }
        positive("target.spread", self.target.spread)?;
        if !(self.crowd.sigma >= 0.0 && self.crowd.sigma.is_finite()) {
            return Err(EvacError::config("crowd.sigma", "must be >= 0"));
        }
        positive("crowd.view_range", self.crowd.view_range)?;
        if !(self.crowd.random_speed >= 0.0 && self.crowd.random_speed.is_finite()) {
            return Err(EvacError::config("crowd.random_speed", "must be >= 0"));
        }
        self.crowd.potential.validate("crowd.potential")?;
        self.kernel.validate()?;
        self.kde_config()?.validate()?;
        self.avoidance.validate()?;
        if let Some(e) = self.gains.eps_int {
            positive("gains.eps_int", e)?;
        }
        self.control_gains().validate(self.robots)?;
        if self.gains.w_max > 100.0 * PI {
            return Err(EvacError::config("gains.w_max", "unreasonably large turn rate"));
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`; objects merge key by key, any
/// other value replaces.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets a dotted key path (`gains.k_u`) inside a JSON object, creating
/// intermediate objects as needed.
pub fn set_json_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(EvacError::config(path, "empty path segment"));
        }
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just created")
            }
            _ => {
                return Err(EvacError::config(
                    parts[..n].join("."),
                    "is not an object",
                ))
            }
        };
        if n + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}
