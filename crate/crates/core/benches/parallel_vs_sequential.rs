//! Parallel-vs-sequential benchmarks for the data-parallel inner loops:
//! batched exact gradient evaluation and the multi-start GD driver.
//!
//! `par_map_idx` uses rayon under the default `parallel` feature and
//! degrades to the sequential path without it; `seq_map_idx` is always the
//! sequential baseline.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pwrelu::dynamics::gd_run;
use pwrelu::par::{par_map_idx, seq_map_idx};
use pwrelu::pwfun::{PiecewiseLinear, PiecewisePoly};
use pwrelu::rng::SplitMix64;
use pwrelu::shallow::{grad_exact, risk_exact, Problem, ShallowParams};

fn tent_problem() -> Problem<f64> {
    let target = PiecewiseLinear::from_knots(&[0.0, 0.5, 1.0], &[0.5, 0.0, 0.5])
        .unwrap()
        .to_piecewise_poly();
    let density = PiecewisePoly::constant(0.0, 1.0, 1.0).unwrap();
    Problem::new(target, density).unwrap()
}

fn random_thetas(n: usize, width: usize, seed: u64) -> Vec<ShallowParams<f64>> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            ShallowParams::from_vec((0..3 * width + 1).map(|_| rng.uniform(-2.0, 2.0)).collect())
                .unwrap()
        })
        .collect()
}

fn bench_batch_gradients(c: &mut Criterion) {
    let problem = tent_problem();
    let thetas = random_thetas(256, 4, 11);
    let mut group = c.benchmark_group("batch_exact_gradients");
    group.bench_function(BenchmarkId::new("parallel", thetas.len()), |b| {
        b.iter(|| {
            let out = par_map_idx(thetas.len(), |i| grad_exact(&thetas[i], &problem));
            black_box(out)
        })
    });
    group.bench_function(BenchmarkId::new("sequential", thetas.len()), |b| {
        b.iter(|| {
            let out = seq_map_idx(thetas.len(), |i| grad_exact(&thetas[i], &problem));
            black_box(out)
        })
    });
    group.finish();
}

fn bench_multistart(c: &mut Criterion) {
    let problem = tent_problem();
    let inits = 16;
    let steps = 200;
    let run_one = |k: usize| {
        let mut rng = SplitMix64::stream(7, k as u64);
        let theta0: Vec<f64> = (0..7).map(|_| rng.uniform(-2.0, 2.0)).collect();
        gd_run(
            &theta0,
            1e-2,
            steps,
            |t| {
                let sp = ShallowParams::from_vec(t.to_vec()).unwrap();
                grad_exact(&sp, &problem)
            },
            |t| {
                let sp = ShallowParams::from_vec(t.to_vec()).unwrap();
                risk_exact(&sp, &problem)
            },
            50,
        )
        .final_risk()
    };
    let mut group = c.benchmark_group("multistart_gd");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", inits), |b| {
        b.iter(|| black_box(par_map_idx(inits, run_one)))
    });
    group.bench_function(BenchmarkId::new("sequential", inits), |b| {
        b.iter(|| black_box(seq_map_idx(inits, run_one)))
    });
    group.finish();
}

criterion_group!(benches, bench_batch_gradients, bench_multistart);
criterion_main!(benches);
