use cauchycp_bench::{gastric, null_trial, SIZES};
use cauchycp_core::bench::{run_method, Method};
use cauchycp_core::RngStream;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn per_method(c: &mut Criterion) {
    let mut g = c.benchmark_group("methods");
    g.sample_size(10);
    for n in SIZES {
        let data = null_trial(n, 0);
        for m in Method::POWER {
            g.bench_with_input(BenchmarkId::new(m.name(), n), &data, |b, d| {
                b.iter(|| run_method(m, black_box(d), RngStream::new(0, 0)))
            });
        }
    }
    g.finish();
}

fn gastric_suite(c: &mut Criterion) {
    let data = gastric();
    let mut g = c.benchmark_group("gastric");
    g.sample_size(10);
    for m in Method::TYPE1 {
        g.bench_function(m.name(), |b| b.iter(|| run_method(m, black_box(&data), RngStream::new(0, 0))));
    }
    g.finish();
}

criterion_group!(benches, per_method, gastric_suite);
criterion_main!(benches);
