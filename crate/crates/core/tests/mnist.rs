//! Smoke tests on the real MNIST files. They print a notice and return early
//! when `$CSAE_MNIST_DIR` (default `<workspace>/data/mnist`) is missing.

use std::path::{Path, PathBuf};

use csae_core::data::load_idx;
use csae_core::train::evaluate;
use csae_core::{train, ArchPreset, CsaeModel, TrainConfig};

fn mnist_file(stem: &str) -> Option<PathBuf> {
    let dir = std::env::var_os("CSAE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let found = [dir.join(stem), dir.join(format!("{stem}.gz"))]
        .into_iter()
        .find(|p| p.exists());
    if found.is_none() {
        eprintln!("skipping: {stem} not found under {}", dir.display());
    }
    found
}

#[test]
fn training_files_have_the_documented_shape() {
    let (Some(images), Some(labels)) = (
        mnist_file("train-images-idx3-ubyte"),
        mnist_file("train-labels-idx1-ubyte"),
    ) else {
        return;
    };
    let raw = load_idx(images, labels).unwrap();
    assert_eq!(raw.images.shape(), &[60_000, 28, 28, 1]);
    assert_eq!(raw.labels.len(), 60_000);
    assert!(raw.labels.iter().all(|&l| l < 10));
    let data = raw.normalized(Some(10)).unwrap();
    let (lo, hi) = data
        .images
        .data()
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert_eq!((lo, hi), (0.0, 1.0));
}

#[test]
fn short_training_lowers_reconstruction_loss() {
    let (Some(images), Some(labels)) = (
        mnist_file("train-images-idx3-ubyte"),
        mnist_file("train-labels-idx1-ubyte"),
    ) else {
        return;
    };
    let data = load_idx(images, labels)
        .unwrap()
        .normalized(Some(10))
        .unwrap()
        .shuffled_subset(512, 0)
        .unwrap();
    let model = CsaeModel::build(ArchPreset::small28(10, 10), 0).unwrap();
    let before = evaluate(&model, &data).unwrap().recon_loss;
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::new(10)
    };
    let (best, report) = train(&model, &data, &config).unwrap();
    assert_eq!(report.epochs.len(), 2);
    assert!(report.epochs[1].recon_loss < report.epochs[0].recon_loss);
    assert!(evaluate(&best, &data).unwrap().recon_loss < before);
}
