//! Differentiation, optimization and gradient evaluation across program
//! sizes.

use adc_bench::{chain, dot, nested, prod, Workload};
use adc_core::eval::eval_gradient_entry;
use adc_core::{gradient_with, Extensions, Method, OptLevel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn workloads() -> Vec<(usize, Workload)> {
    let mut out = Vec::new();
    for n in [16, 64, 256] {
        out.push((n, prod(n)));
        out.push((n, dot(n)));
    }
    for n in [4, 8, 16] {
        out.push((n, nested(n)));
    }
    for k in [8, 32] {
        out.push((k, chain(k)));
    }
    out
}

fn transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("transform");
    for (n, w) in workloads() {
        for m in [Method::Direct, Method::Unf] {
            let id = BenchmarkId::new(format!("{}/{}", w.name, m.name()), n);
            group.bench_function(id, |b| {
                b.iter(|| gradient_with(&w.ctx, black_box(&w.term), Extensions::none(), m, OptLevel::All).unwrap())
            });
        }
    }
    group.finish();
}

fn evaluate(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for (n, w) in workloads() {
        for level in [OptLevel::None, OptLevel::Pe, OptLevel::All] {
            let g = gradient_with(&w.ctx, &w.term, Extensions::none(), Method::Direct, level).unwrap();
            let id = BenchmarkId::new(format!("{}/{}", w.name, level.name()), n);
            group.bench_function(id, |b| b.iter(|| eval_gradient_entry(&w.ctx, black_box(&g), &w.point).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, transform, evaluate);
criterion_main!(benches);
