use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lfms_bench::{ts1_observation, ts1_realization, SEED};
use lfms_core::filtering::{
    normalize, run_filter_full, systematic_resample, FilterProblem, FilterSettings, TestFunctional,
};
use lfms_core::levy_noise::{StableParams, StableSampler};
use lfms_core::model::fixtures::ts1_slow_noise;
use lfms_core::model::simulate_full;
use lfms_core::rng::rng_for;
use lfms_core::ManifoldEvaluator;
use rand::Rng;

fn stable_sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("stable_sampler");
    group.throughput(Throughput::Elements(10_000));
    for (alpha, dim) in [(1.5, 1), (1.5, 2), (1.9, 1)] {
        let sampler = StableSampler::new(StableParams::new(alpha, 1.0, dim).unwrap());
        let mut rng = rng_for(SEED, &[1]);
        let mut x = vec![0.0; dim];
        group.bench_function(BenchmarkId::new(format!("alpha{alpha}"), dim), |b| {
            b.iter(|| {
                let mut acc = 0.0;
                for _ in 0..10_000 {
                    sampler.sample_into(&mut rng, &mut x);
                    acc += x[0];
                }
                black_box(acc)
            })
        });
    }
    group.finish();
}

fn manifold_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("manifold_solve");
    for dt in [1e-3, 1e-4] {
        let (model, omega, window) = ts1_realization(0.1, dt, 0.0);
        group.bench_function(BenchmarkId::new("cold", dt), |b| {
            b.iter(|| {
                let mut ev = ManifoldEvaluator::new(&model, &omega.zeta, &omega.varsigma, window).unwrap();
                black_box(ev.solve_at(0.0, &[0.5]).unwrap().f_value[0])
            })
        });
    }
    group.finish();
}

fn full_trajectory(c: &mut Criterion) {
    let (model, omega, _) = ts1_realization(0.1, 1e-3, 1.0);
    c.bench_function("simulate_full/T1_dt1e-3", |b| {
        b.iter(|| {
            black_box(simulate_full(&model, &omega.fast, &omega.slow, (&[1.0], &[0.5]), 1.0, 1e-3).unwrap().len())
        })
    });
}

fn resampling(c: &mut Criterion) {
    let mut rng = rng_for(SEED, &[5]);
    let log_w: Vec<f64> = (0..2000).map(|_| -rng.random::<f64>() * 10.0).collect();
    c.bench_function("normalize_and_resample/2000", |b| {
        b.iter(|| {
            let (w, _) = normalize(black_box(&log_w));
            black_box(systematic_resample(&w, 0.37))
        })
    });
}

fn filter_run(c: &mut Criterion) {
    let (model, sensor, obs) = ts1_observation(0.1, 2e-3, 0.2);
    let law = ts1_slow_noise();
    let problem = FilterProblem { model: &model, slow_law: &law, sensor: &sensor, u0: &[1.0], v0: &[0.5] };
    let settings = FilterSettings::for_epsilon(0.1);
    let phi = [TestFunctional::from_catalog("tanh_sum", &[]).unwrap()];
    let mut group = c.benchmark_group("filter_full");
    group.sample_size(10);
    group.bench_function("N500_T0.2", |b| {
        b.iter(|| black_box(run_filter_full(&problem, &obs, 500, &settings, &phi, SEED).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, stable_sampler, manifold_solve, full_trajectory, resampling, filter_run);
criterion_main!(benches);
