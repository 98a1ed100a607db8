use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use s8bq_bench::{fitted, gaussian_tensor};
use s8bq_core::{
    decompress_to_int8, fit_lloyd_max, hard_compress, mracos, optimal_1d_kmeans, pack, LloydInit,
};

fn codebook_fitting(c: &mut Criterion) {
    let w = gaussian_tensor(1, 64, 256, 0.25);
    let mut group = c.benchmark_group("lloyd_max");
    for k in [15usize, 31] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| fit_lloyd_max(black_box(&w), k, 100, 1e-12, &LloydInit::Quantiles).unwrap())
        });
    }
    group.finish();

    let small = gaussian_tensor(2, 1, 200, 0.25);
    c.bench_function("dp_oracle n=200 k=8", |b| {
        b.iter(|| optimal_1d_kmeans(black_box(&small), 8).unwrap())
    });
}

fn regularizer(c: &mut Criterion) {
    let w = gaussian_tensor(3, 256, 256, 0.25);
    let cb = fitted(&w, 5);
    c.bench_function("mracos 64k", |b| b.iter(|| mracos(black_box(&w), &cb)));
}

fn compression(c: &mut Criterion) {
    let w = gaussian_tensor(4, 256, 256, 0.25);
    let cb = fitted(&w, 5);
    c.bench_function("hard_compress 64k", |b| b.iter(|| hard_compress(black_box(&w), &cb)));

    let indices = hard_compress(&w, &cb).indices;
    c.bench_function("pack 64k b=5", |b| {
        b.iter(|| pack(black_box(&indices), &cb, w.shape()).unwrap())
    });
    let bytes = pack(&indices, &cb, w.shape()).unwrap();
    c.bench_function("decompress_to_int8 64k b=5", |b| {
        b.iter(|| decompress_to_int8(black_box(&bytes)).unwrap())
    });
}

criterion_group!(benches, codebook_fitting, regularizer, compression);
criterion_main!(benches);
