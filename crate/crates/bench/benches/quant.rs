// Copyright 2026 The culvertd Authors
// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use culvert_bench::random_matrix;
use culvert_core::quant::{
    affine_quantize, calibrate_affine, calibrate_symmetric_per_channel, dequantize, merge_lora_quantized, nf4_quantize,
    LoraAdapter,
};

fn quantize(c: &mut Criterion) {
    let mut g = c.benchmark_group("quantize");
    for n in [64usize, 256] {
        let w = random_matrix(n, n, 1);
        g.bench_with_input(BenchmarkId::new("int8_per_channel", n), &w, |b, w| {
            b.iter(|| calibrate_symmetric_per_channel(black_box(w), 8).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("affine", n), &w, |b, w| {
            b.iter(|| {
                let (s, z) = calibrate_affine(black_box(w), 8).unwrap();
                affine_quantize(w, s, z, 8).unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("nf4", n), &w, |b, w| b.iter(|| nf4_quantize(black_box(w), 64).unwrap()));
    }
    g.finish();
}

fn dequantize_and_merge(c: &mut Criterion) {
    let w = random_matrix(256, 256, 2);
    let (_, q) = calibrate_symmetric_per_channel(&w, 8).unwrap();
    c.bench_function("dequantize_int8_256", |b| b.iter(|| dequantize(black_box(&q))));
    let adapter = LoraAdapter::new(random_matrix(256, 16, 3), random_matrix(16, 256, 4), 32.0).unwrap();
    c.bench_function("merge_lora_int8_256_r16", |b| b.iter(|| merge_lora_quantized(black_box(&q), &adapter).unwrap()));
}

criterion_group!(benches, quantize, dequantize_and_merge);
criterion_main!(benches);
