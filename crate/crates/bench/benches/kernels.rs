use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use tristream_bench::{random_tensor, rng};
use tristream_core::featurestreams::{tinycnn_backward_params, tinycnn_forward, FrameGeometry, TinyCnnParams};
use tristream_core::linalg::{kernels, softmax_slice};
use tristream_core::recurrent::{bptt_backward, unroll_forward, GruParams, LstmParams, RecurrentParams};
use tristream_core::ParamSet;

fn slices(c: &mut Criterion) {
    let mut r = rng(1);
    let w = random_tensor(&mut r, &[64, 128], -1.0, 1.0);
    let x = random_tensor(&mut r, &[128], -1.0, 1.0);
    let g = random_tensor(&mut r, &[64], -1.0, 1.0);
    c.bench_function("dot 128", |b| b.iter(|| kernels::dot(black_box(x.data()), black_box(x.data()))));
    c.bench_function("gemv 64x128", |b| {
        let mut out = vec![0.0; 64];
        b.iter(|| kernels::gemv(black_box(w.data()), 128, black_box(x.data()), &mut out))
    });
    c.bench_function("gemv_t_acc 64x128", |b| {
        let mut out = vec![0.0; 128];
        b.iter(|| kernels::gemv_t_acc(black_box(w.data()), 128, black_box(g.data()), &mut out))
    });
    let logits = random_tensor(&mut r, &[10], -1e3, 1e3);
    c.bench_function("softmax 10", |b| b.iter(|| softmax_slice(black_box(logits.data()))));
}

fn recurrent(c: &mut Criterion) {
    let mut r = rng(2);
    let inputs = random_tensor(&mut r, &[30, 64], -1.0, 1.0);
    let layers = [
        ("gru", RecurrentParams::Gru(GruParams::init(&mut r, 64, 64))),
        ("lstm", RecurrentParams::Lstm(LstmParams::init(&mut r, 64, 64))),
    ];
    let grad_out = random_tensor(&mut r, &[30, 64], -1.0, 1.0);
    for (name, layer) in &layers {
        c.bench_function(&format!("{name} unroll T=30 d=h=64"), |b| {
            b.iter(|| unroll_forward(black_box(layer), black_box(&inputs), None, None).unwrap())
        });
        let (_, cache) = unroll_forward(layer, &inputs, None, None).unwrap();
        c.bench_function(&format!("{name} bptt T=30 d=h=64"), |b| {
            b.iter(|| bptt_backward(black_box(layer), black_box(&cache), black_box(&grad_out)).unwrap())
        });
    }
}

fn cnn(c: &mut Criterion) {
    let mut r = rng(3);
    let mut group = c.benchmark_group("tinycnn");
    group.sample_size(10);
    for size in [32, 64] {
        let g = FrameGeometry::square(size, 1);
        let params = TinyCnnParams::init(&mut r, g, 64).unwrap();
        let frames = random_tensor(&mut r, &[5, size, size, 1], 0.0, 1.0);
        group.bench_function(format!("forward 5 frames {size}x{size}"), |b| {
            b.iter(|| tinycnn_forward(black_box(&params), black_box(&frames)).unwrap())
        });
        let (feats, cache) = tinycnn_forward(&params, &frames).unwrap();
        let grad = random_tensor(&mut r, feats.features.shape(), -1.0, 1.0);
        let mut grads = params.clone();
        group.bench_function(format!("backward 5 frames {size}x{size}"), |b| {
            b.iter(|| {
                grads.scale_all(0.0);
                tinycnn_backward_params(&params, &cache, black_box(&grad), &mut grads).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, slices, recurrent, cnn);
criterion_main!(benches);
