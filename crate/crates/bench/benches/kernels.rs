use std::hint::black_box;

use bsa_bench::{moving_state, params};
use bsa_core::sim::{execute_schedule, reset, PhaseSpec};
use bsa_core::trajopt::{build_ocp, solve, Boundary, CollocationConfig, PhasePlan};
use bsa_core::{ControlSignal, Mode, Schedule, SimOptions, SpringLaw};
use criterion::{criterion_group, criterion_main, Criterion};

fn integrate(c: &mut Criterion) {
    let p = params();
    let x0 = moving_state();
    let mut g = c.benchmark_group("integrate_1s");
    for (name, law) in [("linear", SpringLaw::Linear), ("bouc_wen", SpringLaw::BoucWen)] {
        let sched = Schedule::new(
            vec![
                PhaseSpec { mode: Mode::Brk, duration: 0.5 },
                PhaseSpec { mode: Mode::Sea, duration: 0.5 },
            ],
            ControlSignal::constant(2.0),
        );
        let opts = SimOptions { law, ..SimOptions::default() };
        g.bench_function(name, |b| b.iter(|| execute_schedule(&sched, black_box(&x0), &p, &opts).unwrap()));
    }
    g.finish();
}

fn resets(c: &mut Criterion) {
    let p = params();
    let x = moving_state();
    c.bench_function("reset_brk", |b| b.iter(|| reset(Mode::Brk, black_box(&x), &p).unwrap()));
}

fn collocation(c: &mut Criterion) {
    let p = params();
    let cfg = CollocationConfig {
        segments_per_phase: 15,
        starts: 1,
        ..CollocationConfig::default()
    };
    let ocp = build_ocp(&PhasePlan::fixed(vec![Mode::Brk, Mode::Sea], 0.5), &p, &cfg, &Boundary::from_rest(0.0)).unwrap();
    let mut g = c.benchmark_group("collocation");
    g.sample_size(10);
    g.bench_function("brk_sea_tf0.5", |b| b.iter(|| solve(black_box(&ocp))));
    g.finish();
}

criterion_group!(benches, integrate, resets, collocation);
criterion_main!(benches);
