use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use csae_bench::{conv_params, images, latent, uniform};
use csae_core::classic::knn_predict;
use csae_core::nn::{conv2d_backward, conv2d_forward, conv2d_transpose_forward, LayerParams};
use csae_core::train::Trainer;
use csae_core::{ArchPreset, CsaeModel, UpdateMode};

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d");
    // The two encoder convolutions of the small preset at batch 128.
    for (name, side, cin, cout) in [("28x28x1->32", 28, 1, 32), ("14x14x32->64", 14, 32, 64)] {
        let x = uniform(&[128, side, side, cin], 0.0, 1.0, 1);
        let p = conv_params(3, cin, cout, 2);
        let y = conv2d_forward(&p, &x, 2).unwrap();
        let gy = uniform(y.shape(), -1.0, 1.0, 3);
        g.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| conv2d_forward(&p, black_box(&x), 2).unwrap())
        });
        g.bench_function(BenchmarkId::new("backward", name), |b| {
            b.iter(|| conv2d_backward(&p, black_box(&x), 2, &gy, true).unwrap())
        });
    }
    let z = uniform(&[128, 7, 7, 64], 0.0, 1.0, 4);
    // Transposed kernels are stored `[kh, kw, cout, cin]`.
    let p = LayerParams::new(
        uniform(&[3, 3, 32, 64], -0.1, 0.1, 5),
        Some(uniform(&[32], -0.1, 0.1, 6)),
    );
    g.bench_function("transpose_forward/7x7x64->32", |b| {
        b.iter(|| conv2d_transpose_forward(&p, black_box(&z), 2).unwrap())
    });
    g.finish();
}

fn training_step(c: &mut Criterion) {
    let data = images(128, 10, 6);
    let labels = data.labels.clone();
    let mut model = CsaeModel::build(ArchPreset::small28(10, 10), 0).unwrap();
    let mut trainer = Trainer::new(&mut model, UpdateMode::Joint);
    let mut g = c.benchmark_group("train_step_small28_batch128");
    g.sample_size(20);
    g.bench_function("reconstruction", |b| {
        b.iter(|| {
            trainer
                .reconstruction_step(black_box(&data.images))
                .unwrap()
        })
    });
    g.bench_function("classification", |b| {
        b.iter(|| {
            trainer
                .classification_step(black_box(&data.images), &labels)
                .unwrap()
        })
    });
    g.finish();
}

fn knn(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn_k3");
    for dim in [2, 10, 784] {
        let train = latent(2000, dim, 10, 7);
        let query = latent(200, dim, 10, 8).z;
        g.bench_function(BenchmarkId::new("2000x200", dim), |b| {
            b.iter(|| knn_predict(&train, black_box(&query), 3).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, conv, training_step, knn);
criterion_main!(benches);
