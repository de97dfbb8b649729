//! Deterministic inputs shared by the benchmarks.

use csae_core::classic::LatentDataset;
use csae_core::data::LabeledDataset;
use csae_core::nn::LayerParams;
use csae_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f32, hi: f32, seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Kernel `[kh, kw, cin, cout]` with a bias of length `cout`.
pub fn conv_params(kernel: usize, cin: usize, cout: usize, seed: u64) -> LayerParams {
    LayerParams::new(
        uniform(&[kernel, kernel, cin, cout], -0.1, 0.1, seed),
        Some(uniform(&[cout], -0.1, 0.1, seed + 1)),
    )
}

/// MNIST-sized random images with labels cycling through `classes`.
pub fn images(n: usize, classes: usize, seed: u64) -> LabeledDataset {
    LabeledDataset::new(
        uniform(&[n, 28, 28, 1], 0.0, 1.0, seed),
        (0..n).map(|i| i % classes).collect(),
        classes,
    )
    .unwrap()
}

/// Gaussian-ish latent clusters around per-class offsets.
pub fn latent(n: usize, dim: usize, classes: usize, seed: u64) -> LatentDataset {
    let mut r = rng(seed);
    let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let z: Vec<f64> = (0..n * dim)
        .map(|i| y[i / dim] as f64 + r.random_range(-1.0..1.0))
        .collect();
    LatentDataset::new(Tensor::new([n, dim], z).unwrap(), y, classes).unwrap()
}
