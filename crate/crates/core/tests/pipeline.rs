//! End-to-end use of the public API on a small synthetic image set.

use csae_core::checkpoint::{from_bytes, to_bytes};
use csae_core::classic::{pipeline_classify, ClassicOptions, Method};
use csae_core::data::LabeledDataset;
use csae_core::train::evaluate;
use csae_core::viz::{decision_boundary_image, decoder_grid_image, GridSpec};
use csae_core::{train, ArchPreset, CsaeModel, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three classes lit in the top, middle or bottom band, plus noise.
fn bands(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * 784);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    for &c in &labels {
        for r in 0..28 {
            let lit = r / 10 == c;
            for _ in 0..28 {
                let noise: f32 = rng.random_range(0.0..0.2);
                pixels.push(if lit { 0.8 + noise } else { noise });
            }
        }
    }
    LabeledDataset::new(Tensor::new([n, 28, 28, 1], pixels).unwrap(), labels, 3).unwrap()
}

#[test]
fn train_save_reload_classify_and_draw() {
    let data = bands(150, 1);
    let test = bands(60, 2);
    let model = CsaeModel::build(ArchPreset::small28(2, 3), 5).unwrap();
    let config = TrainConfig {
        epochs: 6,
        batch_size: 16,
        ..TrainConfig::new(2)
    };
    let (best, report) = train(&model, &data, &config).unwrap();
    assert!(report.best_val_acc > 0.9, "{report:?}");

    let reloaded = from_bytes(&to_bytes(&best)).unwrap();
    let a = evaluate(&best, &test).unwrap();
    let b = evaluate(&reloaded, &test).unwrap();
    assert_eq!(a.predictions, b.predictions);
    assert!(a.metrics.accuracy > 0.9, "{}", a.metrics.accuracy);

    let knn = pipeline_classify(
        &reloaded,
        &data,
        &test,
        Method::Knn,
        &ClassicOptions::default(),
    )
    .unwrap();
    assert!(knn.metrics.accuracy > 0.9, "{}", knn.metrics.accuracy);

    let z = reloaded.encode(&test.images).unwrap();
    let grid = GridSpec::around(&z, 50).unwrap();
    let img = decision_boundary_image(&reloaded, &grid, &[]).unwrap();
    assert_eq!(img.rgb.len(), 50 * 50 * 3);
    let present: std::collections::BTreeSet<usize> = img.classes.iter().copied().collect();
    assert!(a.predictions.iter().all(|p| present.contains(p)));
    let (side, gray) =
        decoder_grid_image(&reloaded, &GridSpec::around(&z, 4).unwrap(), 28).unwrap();
    assert_eq!((side, gray.len()), (112, 112 * 112));
}
