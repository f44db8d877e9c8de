use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use evac_core::config::ScenarioConfig;
use evac_core::control::Controller;
use evac_core::crowd::{step_humans_exact, Navigation, NoiseStreams};
use evac_core::density::kde_estimate;
use evac_core::guidance::collective_field;
use evac_core::sim::{initialize, target_density};

fn pipeline(c: &mut Criterion) {
    let cfg = ScenarioConfig::paper_sec5();
    let grid = cfg.grid().unwrap();
    let kde = cfg.kde_config().unwrap();
    let (humans, robots, _) = initialize(&cfg).unwrap();
    let rho_star = target_density(&cfg.target, &grid).unwrap();
    let rho = kde_estimate(&humans.positions, &kde, &grid).unwrap();
    let params = cfg.crowd.params();

    c.bench_function("kde_200_agents", |b| {
        b.iter(|| kde_estimate(black_box(&humans.positions), &kde, &grid).unwrap())
    });
    c.bench_function("collective_field_16_robots", |b| {
        b.iter(|| collective_field(black_box(&robots), &cfg.kernel, &grid))
    });
    c.bench_function("controller_step", |b| {
        let mut ctrl = Controller::new(cfg.control_gains(), cfg.kernel, false);
        b.iter(|| {
            ctrl.step(&rho, &rho_star, &robots, &params.sigma, &params.potential, cfg.dt)
                .unwrap()
        })
    });
    c.bench_function("human_step_200", |b| {
        let mut noise = NoiseStreams::new(cfg.seed, humans.len());
        b.iter(|| {
            step_humans_exact(
                &humans,
                &robots,
                &cfg.kernel,
                Navigation::Robots,
                &params,
                &cfg.avoidance,
                cfg.dt,
                &cfg.domain,
                &mut noise,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
