use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use retention_bench::{regression_items, scalars, vectors};
use retention_core::distributions::DistributionSpec;
use retention_core::mean_estimation::{alg1_step, Alg1};
use retention_core::regression::decode;
use retention_core::subset_sum::{best_subset_exact, best_subset_greedy, best_subset_mitm, Norm};
use retention_core::{DataItem, Engine, EtaSchedule, SampleState};

fn subset_engines(c: &mut Criterion) {
    let mut group = c.benchmark_group("closest_average");
    for n in [12usize, 16, 20] {
        let xs = scalars(n, n as u64);
        let cands: Vec<[f64; 1]> = xs.iter().map(|&x| [x]).collect();
        group.bench_with_input(BenchmarkId::new("exact", n), &n, |b, _| {
            b.iter(|| best_subset_exact(black_box(&cands), &[0.1], Norm::L2).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("mitm", n), &n, |b, _| {
            b.iter(|| best_subset_mitm(black_box(&xs), 0.1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("greedy", n), &n, |b, _| {
            b.iter(|| best_subset_greedy(black_box(&cands), &[0.1], Norm::L2).unwrap())
        });
    }
    let xs = scalars(32, 32);
    group.bench_function("mitm/32", |b| b.iter(|| best_subset_mitm(black_box(&xs), 0.1).unwrap()));
    let vs = vectors(16, 3, 3);
    group.bench_function("exact_vector/16x3", |b| {
        b.iter(|| best_subset_exact(black_box(&vs), &[0.0; 3], Norm::L2).unwrap())
    });
    group.finish();
}

fn algorithm_steps(c: &mut Criterion) {
    let spec = DistributionSpec::ContaminatedUniformMean {
        theta: vec![0.0],
        gamma: 1.0,
        p: 0.5,
        sigma: 1.0,
    };
    let sampler = spec.sampler().unwrap();
    let mut rng = retention_core::seeded_rng(1, 0);
    let state = SampleState::new(sampler.draw_batch(20, &mut rng, 1));
    let batch: Vec<DataItem> = sampler.draw_batch(20, &mut rng, 2);
    for engine in [Engine::Exact, Engine::Mitm] {
        let alg = Alg1 {
            b: 10,
            eta: EtaSchedule::InverseT,
            engine,
            fallback: true,
        };
        c.bench_function(&format!("alg1_step/m20/{engine:?}"), |b| {
            b.iter(|| alg1_step(black_box(&state), black_box(&batch), 2, &alg).unwrap())
        });
    }
    let items = regression_items(64, 2);
    c.bench_function("decode/k8x8", |b| b.iter(|| decode(black_box(&items), 8).unwrap()));
}

criterion_group!(benches, subset_engines, algorithm_steps);
criterion_main!(benches);
