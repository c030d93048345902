//! Hot kernels under the rayon pool and on a single worker.
//!
//!     cargo bench -p specsum                          # rayon backend
//!     cargo bench -p specsum --no-default-features    # sequential fallback
//!
//! Each kernel runs at 1 worker and at every available core, so one
//! rayon run already shows the parallel speedup; the second command
//! measures the fallback with no pool at all.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use specsum::arith::kloosterman_many;
use specsum::moments::{series_a, weighted_zeta_integral};
use specsum::par;
use specsum::quad::QuadratureConfig;
use specsum::smoothing::WeightSpec;
use specsum::trace::{FPlus, FPlusMethod};

fn backend() -> &'static str {
    if par::is_parallel() {
        "rayon"
    } else {
        "sequential"
    }
}

fn thread_counts() -> Vec<usize> {
    let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if n > 1 && par::is_parallel() {
        vec![1, n]
    } else {
        vec![1]
    }
}

fn kloosterman_rows(c: &mut Criterion) {
    let ms: Vec<u64> = (1..=64).collect();
    let mut g = c.benchmark_group("kloosterman_many");
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::new(backend(), t), &t, |b, &t| {
            b.iter(|| par::with_threads(t, || (4000..4016).map(|q| kloosterman_many(&ms, 1, q)).collect::<Vec<_>>()))
        });
    }
    g.finish();
}

fn f_plus_wide(c: &mut Criterion) {
    let w = WeightSpec::gaussian(30.0, 3.0 * 30f64.ln().sqrt()).unwrap();
    let quad = QuadratureConfig::default();
    let mut g = c.benchmark_group("f_plus_series");
    g.sample_size(10);
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::new(backend(), t), &t, |b, &t| {
            b.iter(|| {
                par::with_threads(t, || {
                    // fresh evaluator so the cached node sets are rebuilt
                    let f = FPlus::new(&w, &quad, FPlusMethod::Series);
                    [0.5, 2.0, 8.0].map(|x| f.eval(black_box(x)).unwrap())
                })
            })
        });
    }
    g.finish();
}

fn f_plus_integral(c: &mut Criterion) {
    let w = WeightSpec::gaussian(10.0, 1.0).unwrap();
    let quad = QuadratureConfig::default();
    let mut g = c.benchmark_group("f_plus_integral");
    g.sample_size(10);
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::new(backend(), t), &t, |b, &t| {
            b.iter(|| {
                par::with_threads(t, || FPlus::new(&w, &quad, FPlusMethod::Integral).eval(black_box(40.0)).unwrap())
            })
        });
    }
    g.finish();
}

fn zeta_moment(c: &mut Criterion) {
    let quad = QuadratureConfig::default();
    let mut g = c.benchmark_group("weighted_zeta_integral");
    g.sample_size(10);
    for t in thread_counts() {
        g.bench_with_input(BenchmarkId::new(backend(), t), &t, |b, &t| {
            b.iter(|| par::with_threads(t, || weighted_zeta_integral(black_box(200.0), 1, &quad).unwrap()))
        });
    }
    g.finish();
}

fn constant_series(c: &mut Criterion) {
    c.bench_function("series_a/10000", |b| b.iter(|| series_a(black_box(10_000))));
}

criterion_group!(benches, kloosterman_rows, f_plus_wide, f_plus_integral, zeta_moment, constant_series);
criterion_main!(benches);
