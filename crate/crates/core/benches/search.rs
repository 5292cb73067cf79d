//! Search, coverage and clustering kernels on the rayon pool against a
//! single worker thread. Built without the `parallel` feature, only the
//! sequential code path is measured.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_scaling::adaptive::{irs_fit, IrsOptions};
use robust_scaling::clustering::{kmeans_fit, KMeansConfig};
use robust_scaling::dataset::softmax_rows;
use robust_scaling::scaling::{full_grid_search, greedy_search};
use robust_scaling::{PredictionSet, SearchConfig, Target};

fn synthetic(n: usize, c: usize, a: usize, d: usize, seed: u64) -> PredictionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let attrs: Vec<usize> = (0..n).map(|_| rng.random_range(0..a)).collect();
    let logits = Array2::from_shape_fn((n, c), |(i, k)| {
        let signal = if k == labels[i] { 1.5 } else { 0.0 };
        let bias = if k == attrs[i] % c { 0.7 } else { 0.0 };
        signal + bias + 2.0 * (rng.random::<f64>() - 0.5)
    });
    let features = Array2::from_shape_fn((n, d), |(i, j)| {
        let shift = if j == attrs[i] % d { 2.0 } else { 0.0 };
        shift + rng.random::<f64>() - 0.5
    });
    PredictionSet::new(
        softmax_rows(logits.view()),
        labels,
        attrs,
        a,
        Some(features),
    )
    .unwrap()
}

#[cfg(feature = "parallel")]
fn paths() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    vec![("rayon", None), ("single-thread", Some(single))]
}

#[cfg(not(feature = "parallel"))]
fn paths() -> Vec<(&'static str, Option<()>)> {
    vec![("sequential", None)]
}

#[cfg(feature = "parallel")]
fn on<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn on<R>(_: &Option<()>, f: impl FnOnce() -> R) -> R {
    f()
}

fn bench_search(c: &mut Criterion) {
    let multi = synthetic(20_000, 10, 2, 4, 0);
    let binary = synthetic(20_000, 2, 2, 4, 1);
    let config = SearchConfig::default().with_target(Target::WorstGroup);
    let full = config.clone().with_range(-60, 60);

    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    for (name, pool) in paths() {
        group.bench_function(BenchmarkId::new("greedy_c10_n20000", name), |b| {
            b.iter(|| on(&pool, || greedy_search(&multi, &config, None).unwrap()))
        });
        group.bench_function(BenchmarkId::new("full_grid_c2_n20000", name), |b| {
            b.iter(|| on(&pool, || full_grid_search(&binary, &full, None).unwrap()))
        });
    }
    group.finish();
}

fn bench_clustering(c: &mut Criterion) {
    let set = synthetic(20_000, 3, 4, 16, 2);
    let features = set.features().unwrap();
    let config = SearchConfig::default();

    let mut group = c.benchmark_group("clustering");
    group.sample_size(10);
    for (name, pool) in paths() {
        group.bench_function(BenchmarkId::new("kmeans_k20_n20000", name), |b| {
            b.iter(|| {
                on(&pool, || {
                    kmeans_fit(features, 20, 0, &KMeansConfig::default()).unwrap()
                })
            })
        });
        group.bench_function(BenchmarkId::new("irs_fit_k20_n20000", name), |b| {
            b.iter(|| {
                on(&pool, || {
                    irs_fit(&set, 20, &config, &IrsOptions::default()).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_search, bench_clustering);
criterion_main!(benches);
