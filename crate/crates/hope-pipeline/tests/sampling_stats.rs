//! Statistical checks on patch sampling.

use hope_pipeline::{extract_patches, ImageSet};

/// Rebuild the sampled (image, row, col) stream by matching each patch
/// against every possible window. Works because the test images give every
/// window a unique fingerprint.
fn window_catalog(images: &ImageSet, side: usize) -> Vec<(usize, usize, usize, Vec<f64>)> {
    let mut catalog = Vec::new();
    for img in 0..images.count() {
        let pixels = images.image(img);
        for r in 0..=images.height() - side {
            for c in 0..=images.width() - side {
                let mut w = Vec::with_capacity(side * side);
                for dr in 0..side {
                    let start = (r + dr) * images.width() + c;
                    w.extend_from_slice(&pixels[start..start + side]);
                }
                let mut normalized = w.clone();
                hope_pipeline::normalize_patch(&mut normalized);
                catalog.push((img, r, c, normalized));
            }
        }
    }
    catalog
}

#[test]
fn positions_and_images_are_sampled_uniformly() {
    // 4 images of 10x10, side 6 -> 5x5 positions; every pixel value distinct
    let count = 4;
    let (h, w, side) = (10, 10, 6);
    let data: Vec<f64> = (0..count * h * w).map(|i| (i * i % 7919) as f64).collect();
    let images = ImageSet::new(count, h, w, data).unwrap();
    let catalog = window_catalog(&images, side);

    let draws = 100_000;
    let patches = extract_patches(&images, side, draws, 1234).unwrap();

    let mut image_hist = vec![0usize; count];
    let mut position_hist = vec![0usize; 25];
    for n in 0..patches.len() {
        let row = patches.data().row(n);
        let hit = catalog
            .iter()
            .find(|(_, _, _, w)| {
                w.iter().zip(row).all(|(a, b)| (a - b).abs() < 1e-9)
            })
            .expect("sampled patch must match some window");
        image_hist[hit.0] += 1;
        position_hist[hit.1 * 5 + hit.2] += 1;
    }

    // multinomial 3-sigma bounds per cell
    let check = |hist: &[usize], label: &str| {
        let cells = hist.len() as f64;
        let p = 1.0 / cells;
        let expect = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &obs) in hist.iter().enumerate() {
            let dev = (obs as f64 - expect).abs();
            assert!(
                dev <= 3.0 * sigma,
                "{label} cell {i}: observed {obs}, expected {expect:.1} ± {:.1}",
                3.0 * sigma
            );
        }
    };
    check(&image_hist, "image");
    check(&position_hist, "position");
}
