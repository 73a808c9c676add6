use criterion::{black_box, criterion_group, criterion_main, Criterion};

use fbmc_bench::bundled_network;
use fbmc_core::dispatch::{solve_d0, solve_market, MarketProblem, Stage};
use fbmc_core::sensitivity::{lodf, nodal_ptdf, Sensitivities};
use fbmc_core::study::{prepare, run_capacity, run_d1};
use fbmc_core::{derive_virtual_zones, Setup};

const HOURS: usize = 24;

fn sensitivities(c: &mut Criterion) {
    let grid = derive_virtual_zones(bundled_network(1)).unwrap();
    c.bench_function("nodal_ptdf", |b| b.iter(|| nodal_ptdf(black_box(&grid)).unwrap()));
    let ptdf = nodal_ptdf(&grid).unwrap();
    c.bench_function("lodf", |b| b.iter(|| lodf(black_box(&grid), &ptdf)));
    c.bench_function("sensitivities_with_cnec_selection", |b| {
        b.iter(|| Sensitivities::compute(black_box(&grid)).unwrap())
    });
}

fn stages(c: &mut Criterion) {
    let p = prepare(bundled_network(HOURS)).unwrap();
    let hours: Vec<usize> = (0..HOURS).collect();
    let d2 = solve_market(&p.grid, &MarketProblem::new(Stage::D2, hours.clone(), None)).unwrap();
    let pair = run_capacity(&p, &d2, false);
    let d1 = run_d1(&p, &pair, Setup::Ahc, &hours, None).unwrap();

    let mut group = c.benchmark_group("stages");
    group.sample_size(10);
    group.bench_function("d2_24h", |b| {
        b.iter(|| solve_market(&p.grid, &MarketProblem::new(Stage::D2, hours.clone(), None)).unwrap())
    });
    group.bench_function("capacity_24h", |b| b.iter(|| run_capacity(&p, black_box(&d2), false)));
    group.bench_function("d1_ahc_1h", |b| b.iter(|| run_d1(&p, &pair, Setup::Ahc, &[0], None).unwrap()));
    group.bench_function("d0_24h", |b| {
        b.iter(|| solve_d0(&p.grid, &p.sens.cm_set, &p.sens.ptdf, black_box(&d1), None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, sensitivities, stages);
criterion_main!(benches);
