//! Batch front end: configuration loading, single runs, parameter sweeps and
//! PGM heatmaps.

use clap::Parser;
use rayon::prelude::*;
use serde_json::Value;
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use evac_core::config::{merge_json, set_json_path, Mode, ScenarioConfig};
use evac_core::field::ScalarField;
use evac_core::rng::derive_seed;
use evac_core::sim::{run, write_run_dir, RunOutput};
use evac_core::EvacError;

#[derive(Debug, Clone, Parser)]
#[command(name = "evac", version, about = "Robot-guided crowd density control simulator")]
pub struct Cli {
    /// JSON scenario file; merged over the preset when both are given.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Named preset (paper-sec5).
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    #[arg(long, value_name = "PATH", env = "EVAC_OUT_DIR", default_value = "evac-out")]
    pub out_dir: PathBuf,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// guided, perfect-velocity or no-control.
    #[arg(long)]
    pub mode: Option<String>,
    /// Simulated time in seconds.
    #[arg(long, value_name = "SECONDS")]
    pub horizon: Option<f64>,
    #[arg(long, value_name = "STEPS")]
    pub snapshot_every: Option<usize>,
    /// Write a PGM heatmap next to every density snapshot.
    #[arg(long)]
    pub emit_heatmaps: bool,
    /// Run once per value of a dotted config key, e.g. `robots=1,4,16`.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    pub sweep: Option<String>,
    /// Parallel sweep runs.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(EvacError),
    #[error("{0}")]
    Runtime(String),
    #[error("{count} invariant violation(s) in {run}")]
    Invariant { run: String, count: u64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Invariant { .. } => 4,
        }
    }

    fn config(key: &str, msg: impl Into<String>) -> Self {
        CliError::Config(EvacError::config(key, msg))
    }
}

impl From<EvacError> for CliError {
    fn from(e: EvacError) -> Self {
        match e {
            EvacError::Config { .. } => CliError::Config(e),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Builds the scenario from preset, file and flag overrides, in that order.
pub fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut doc = match &cli.preset {
        Some(name) => Some(ScenarioConfig::preset(name)?.to_json_value()),
        None => None,
    };
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config("config", format!("{}: malformed JSON: {e}", path.display())))?;
        match &mut doc {
            Some(base) => merge_json(base, file),
            None => doc = Some(file),
        }
    }
    let mut doc = doc.ok_or_else(|| CliError::config("config", "pass --config or --preset"))?;
    if let Some(seed) = cli.seed {
        doc["seed"] = seed.into();
    }
    if let Some(mode) = &cli.mode {
        let m = Mode::parse(mode).ok_or_else(|| {
            CliError::config("mode", format!("unknown mode `{mode}`"))
        })?;
        doc["mode"] = m.as_str().into();
    }
    if let Some(h) = cli.horizon {
        doc["horizon"] = h.into();
    }
    if let Some(s) = cli.snapshot_every {
        doc["snapshot_every"] = s.into();
    }
    Ok(ScenarioConfig::from_json_value(doc)?)
}

/// Entry point shared by the binary and the tests.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    prepare_out_dir(&cli.out_dir)?;
    match &cli.sweep {
        None => {
            let out = run_to_dir(&cfg, &cli.out_dir, cli.emit_heatmaps)?;
            check_violations(&cli.out_dir, &out)
        }
        Some(spec) => {
            let (key, values) = parse_sweep(spec)?;
            let rows = sweep(&cfg, &key, &values, &cli.out_dir, cli.jobs, cli.emit_heatmaps)?;
            match rows.iter().find(|r| r.violations > 0) {
                Some(r) => Err(CliError::Invariant {
                    run: r.dir.clone(),
                    count: r.violations,
                }),
                None => Ok(()),
            }
        }
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::config("out_dir", format!("{}: {e}", dir.display())))
}

fn check_violations(dir: &Path, out: &RunOutput) -> Result<(), CliError> {
    match out.violations.total() {
        0 => Ok(()),
        count => Err(CliError::Invariant {
            run: dir.display().to_string(),
            count,
        }),
    }
}

/// Runs one scenario and writes its directory. A failed run still leaves
/// `failure.txt` with the diagnostic record.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path, heatmaps: bool) -> Result<RunOutput, CliError> {
    let io_err = |e: io::Error| CliError::Runtime(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io_err)?;
    let out = match run(cfg) {
        Ok(out) => out,
        Err(failure) => {
            fs::write(dir.join("failure.txt"), format!("{failure}\n")).map_err(io_err)?;
            return Err(CliError::Runtime(failure.to_string()));
        }
    };
    write_run_dir(dir, cfg, &out).map_err(|e| CliError::Runtime(e.to_string()))?;
    if heatmaps {
        for s in &out.snapshots {
            let path = dir.join("snapshots").join(format!("density_{}.pgm", s.step));
            emit_heatmap(&s.density, &path).map_err(io_err)?;
        }
    }
    Ok(out)
}

/// Binary PGM (P5), row 0 at the top of the domain, linear min-max scaling to
/// 0..=255. A constant field maps to mid gray. The range goes to `<path>.txt`.
pub fn emit_heatmap(field: &ScalarField, path: &Path) -> io::Result<()> {
    let bytes = heatmap_bytes(field);
    let grid = field.grid();
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", grid.nx(), grid.ny())?;
    w.write_all(&bytes)?;
    w.flush()?;
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    fs::write(side, format!("min {}\nmax {}\n", field.min(), field.max()))
}

/// The gray levels written by [`emit_heatmap`], in file order.
pub fn heatmap_bytes(field: &ScalarField) -> Vec<u8> {
    let grid = field.grid();
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let mut out = Vec::with_capacity(grid.len());
    for j in (0..grid.ny()).rev() {
        for i in 0..grid.nx() {
            let v = field.at(i, j);
            let g = if span > 0.0 {
                (255.0 * (v - lo) / span).round()
            } else {
                128.0
            };
            out.push(g as u8);
        }
    }
    out
}

/// Parses a binary PGM into (width, height, maxval, pixels).
pub fn read_pgm(path: &Path) -> io::Result<(usize, usize, u16, Vec<u8>)> {
    let mut data = Vec::new();
    fs::File::open(path)?.read_to_end(&mut data)?;
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    let pixels = data.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    if pixels.len() != w * h {
        return Err(bad("raster size mismatch"));
    }
    Ok((w, h, maxval as u16, pixels.to_vec()))
}

/// Splits `key=v1,v2,...`. Values are read as JSON, falling back to strings.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<Value>), CliError> {
    let (key, list) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config("sweep", "expected KEY=V1,V2,..."))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::config("sweep", "empty key"));
    }
    let values: Vec<Value> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect();
    if values.is_empty() {
        return Err(CliError::config("sweep", format!("no values given for `{key}`")));
    }
    Ok((key.to_string(), values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub dir: String,
    pub seed: u64,
    pub initial_err_l2: f64,
    pub final_err_l2: f64,
    pub decay_rate: f64,
    pub violations: u64,
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// One run per value, each in `<out>/<key>=<value>/`, plus `sweep.csv`.
/// Run `k` uses seed `derive_seed(base.seed, k)` unless the swept key is `seed`.
pub fn sweep(
    base: &ScenarioConfig,
    key: &str,
    values: &[Value],
    out_dir: &Path,
    jobs: usize,
    heatmaps: bool,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::config("sweep", "empty value list"));
    }
    let mut configs = Vec::with_capacity(values.len());
    for (k, v) in values.iter().enumerate() {
        let mut doc = base.to_json_value();
        set_json_path(&mut doc, key, v.clone())?;
        if key != "seed" {
            doc["seed"] = derive_seed(base.seed, k as u64).into();
        }
        let cfg = ScenarioConfig::from_json_value(doc)?;
        let label = value_label(v).replace(['/', '\\', ' '], "_");
        configs.push((value_label(v), format!("{key}={label}"), cfg));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let results: Vec<Result<SweepRow, CliError>> = pool.install(|| {
        configs
            .par_iter()
            .map(|(value, dir, cfg)| {
                let out = run_to_dir(cfg, &out_dir.join(dir), heatmaps)?;
                Ok(SweepRow {
                    value: value.clone(),
                    dir: dir.clone(),
                    seed: cfg.seed,
                    initial_err_l2: out.initial_err(),
                    final_err_l2: out.final_err(),
                    decay_rate: out.log.decay_rate(),
                    violations: out.violations.total(),
                })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_sweep_csv(&out_dir.join("sweep.csv"), key, &rows)
        .map_err(|e| CliError::Runtime(format!("sweep.csv: {e}")))?;
    Ok(rows)
}

fn write_sweep_csv(path: &Path, key: &str, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([key, "dir", "seed", "initial_err_l2", "final_err_l2", "decay_rate", "violations"])?;
    for r in rows {
        w.write_record([
            r.value.clone(),
            r.dir.clone(),
            r.seed.to_string(),
            r.initial_err_l2.to_string(),
            r.final_err_l2.to_string(),
            r.decay_rate.to_string(),
            r.violations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use evac_core::field::{Bounds, Grid};

    fn grid() -> Grid {
        Grid::new(Bounds::square(10.0), 4, 3).unwrap()
    }

    #[test]
    fn constant_field_is_uniform_gray() {
        let f = ScalarField::constant(grid(), 2.5);
        assert!(heatmap_bytes(&f).iter().all(|&b| b == 128));
    }

    #[test]
    fn delta_field_lights_one_pixel() {
        let g = grid();
        let mut f = ScalarField::zeros(g);
        f.values_mut()[g.index(1, 2)] = 7.0;
        let bytes = heatmap_bytes(&f);
        // top row of the image is j = ny - 1
        assert_eq!(bytes.iter().filter(|&&b| b == 255).count(), 1);
        assert_eq!(bytes[1], 255);
        assert_eq!(bytes.iter().filter(|&&b| b == 0).count(), g.len() - 1);
    }

    #[test]
    fn sweep_spec_parsing() {
        let (k, v) = parse_sweep("robots=1,4,16").unwrap();
        assert_eq!(k, "robots");
        assert_eq!(v, vec![Value::from(1), Value::from(4), Value::from(16)]);
        let (_, v) = parse_sweep("mode=guided, no-control").unwrap();
        assert_eq!(v[1], Value::String("no-control".into()));
        assert_eq!(parse_sweep("robots=").unwrap_err().exit_code(), 2);
        assert_eq!(parse_sweep("robots").unwrap_err().exit_code(), 2);
    }
}
