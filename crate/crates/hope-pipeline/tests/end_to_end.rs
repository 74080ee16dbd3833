//! Full pipeline on a synthetic two-class image set: patches, extractor,
//! pooling, classifier, and on-disk feature round-trip.

use hope_core::{Mat, TrainConfig};
use hope_pipeline::{
    extract_patches, fit_spkmeans, pool_images, read_features, train_linear_classifier,
    write_features, ClassifierConfig, ImageSet,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Class 0 draws horizontal bars, class 1 vertical bars, plus pixel noise.
fn striped_images(n: usize, seed: u64) -> (ImageSet, Vec<usize>) {
    let (h, w) = (12, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * h * w);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let phase = rng.random_range(0..3);
        for r in 0..h {
            for c in 0..w {
                let on = if label == 0 { (r + phase) % 3 == 0 } else { (c + phase) % 3 == 0 };
                let noise = 0.08 * rng.random_range(-1.0..1.0f64);
                data.push(if on { 0.9 + noise } else { 0.1 + noise });
            }
        }
        labels.push(label);
    }
    (ImageSet::new(n, h, w, data).unwrap(), labels)
}

fn pooled_features(seed: u64) -> (Mat, Vec<usize>, Mat, Vec<usize>) {
    let (train_images, train_labels) = striped_images(120, seed);
    let (test_images, test_labels) = striped_images(60, seed + 1);

    let patches = extract_patches(&train_images, 4, 3000, seed).unwrap();
    let extractor = fit_spkmeans(patches.data(), 12, seed).unwrap();

    let train_feats = pool_images(&extractor, &train_images, 4).unwrap();
    let test_feats = pool_images(&extractor, &test_images, 4).unwrap();
    (train_feats, train_labels, test_feats, test_labels)
}

#[test]
fn stripes_are_classified_from_pooled_features() {
    let (train_x, train_y, test_x, test_y) = pooled_features(40);
    assert_eq!(train_x.cols(), 48);

    let cfg = ClassifierConfig { epochs: 25, ..ClassifierConfig::default() };
    let (clf, report) = train_linear_classifier(&train_x, &train_y, 2, &cfg).unwrap();
    let train_err = report.final_train_err().unwrap();
    let test_err = clf.error_rate(&test_x, &test_y).unwrap();
    assert!(train_err == 0.0, "train error {train_err}");
    assert!(test_err < 0.05, "test error {test_err}");
}

#[test]
fn same_seed_produces_bit_identical_features() {
    let (a, _, _, _) = pooled_features(77);
    let (b, _, _, _) = pooled_features(77);
    assert_eq!(a.data(), b.data());
}

#[test]
fn features_survive_the_disk_round_trip_in_f32() {
    let (train_x, ..) = pooled_features(13);
    let path = std::env::temp_dir().join(format!("hope-e2e-{}.fm", std::process::id()));
    write_features(&path, &train_x).unwrap();
    let back = read_features(&path).unwrap();
    std::fs::remove_file(&path).unwrap();

    assert_eq!(back.rows(), train_x.rows());
    assert_eq!(back.cols(), train_x.cols());
    let mut worst: f64 = 0.0;
    for (a, b) in back.data().iter().zip(train_x.data()) {
        worst = worst.max((a - b).abs() / b.abs().max(1.0));
    }
    // f32 storage keeps ~7 significant digits
    assert!(worst < 1e-6, "round-trip drift {worst:e}");
}

#[test]
fn mixture_extractor_end_to_end_smoke() {
    let (train_images, train_labels) = striped_images(80, 90);
    let patches = extract_patches(&train_images, 4, 2000, 90).unwrap();

    let mut cfg = TrainConfig::unsupervised_defaults();
    cfg.epochs = 4;
    cfg.seed = 90;
    let (mut extractor, report) =
        hope_pipeline::fit_hope_movmf(patches.data(), 10, 6, hope_pipeline::DEFAULT_KAPPA0, &cfg)
            .unwrap();
    assert_eq!(report.epochs.len(), 4);
    // a briefly trained mixture keeps low concentrations, so its log scores
    // sit below zero; a negative threshold keeps the rectifier from
    // silencing every feature
    extractor.set_epsilon(-10.0).unwrap();

    let feats = pool_images(&extractor, &train_images, 4).unwrap();
    assert_eq!(feats.cols(), 4 * extractor.k());

    let cfg = ClassifierConfig { epochs: 30, ..ClassifierConfig::default() };
    let (_, creport) = train_linear_classifier(&feats, &train_labels, 2, &cfg).unwrap();
    assert!(creport.final_train_err().unwrap() < 0.05);
}
