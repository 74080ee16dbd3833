//! Random patch extraction with per-patch normalization.
//!
//! Every patch is flattened row-major to a `w·w` vector, shifted to mean
//! zero and divided by its standard deviation. A floor on the divisor keeps
//! constant patches from blowing up; they map to the zero vector instead.

use hope_core::{HopeError, Mat, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::image::ImageSet;

/// Smallest divisor used when normalizing a patch.
pub const STD_FLOOR: f64 = 1e-5;

/// Normalized patches plus the per-patch statistics that were removed.
#[derive(Debug, Clone)]
pub struct PatchSet {
    data: Mat,
    side: usize,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl PatchSet {
    pub fn data(&self) -> &Mat {
        &self.data
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    /// Mean removed from patch `i`.
    pub fn mean(&self, i: usize) -> f64 {
        self.means[i]
    }

    /// Standard deviation of patch `i` before the divisor floor.
    pub fn std(&self, i: usize) -> f64 {
        self.stds[i]
    }
}

/// Shifts `p` to mean zero and divides by `max(std, STD_FLOOR)`.
/// Returns the removed `(mean, std)` with the std reported pre-floor.
pub fn normalize_patch(p: &mut [f64]) -> (f64, f64) {
    let d = p.len() as f64;
    let mean = p.iter().sum::<f64>() / d;
    let mut var = 0.0;
    for v in p.iter_mut() {
        *v -= mean;
        var += *v * *v;
    }
    let std = (var / d).sqrt();
    let inv = 1.0 / std.max(STD_FLOOR);
    for v in p.iter_mut() {
        *v *= inv;
    }
    (mean, std)
}

/// Copies the `side`-pixel square with top-left corner `(r, c)` out of
/// `image` (row-major, `width` pixels per row) into `out`.
pub fn copy_window(image: &[f64], width: usize, r: usize, c: usize, side: usize, out: &mut [f64]) {
    for dr in 0..side {
        let src = (r + dr) * width + c;
        out[dr * side..(dr + 1) * side].copy_from_slice(&image[src..src + side]);
    }
}

/// Samples `count` patches uniformly over images and valid positions,
/// then normalizes each one.
pub fn extract_patches(
    images: &ImageSet,
    side: usize,
    count: usize,
    seed: u64,
) -> Result<PatchSet> {
    if side == 0 {
        return Err(HopeError::InvalidArgument("patch side must be positive".into()));
    }
    if side > images.height() || side > images.width() {
        return Err(HopeError::InvalidArgument(format!(
            "patch side {side} exceeds image shape {}x{}",
            images.height(),
            images.width()
        )));
    }
    if images.count() == 0 {
        return Err(HopeError::InvalidArgument("no images to sample from".into()));
    }
    if count == 0 {
        return Err(HopeError::InvalidArgument("need at least one patch".into()));
    }

    let rows = images.height() - side + 1;
    let cols = images.width() - side + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Mat::zeros(count, side * side);
    let mut means = Vec::with_capacity(count);
    let mut stds = Vec::with_capacity(count);

    for n in 0..count {
        let img = rng.random_range(0..images.count());
        let r = rng.random_range(0..rows);
        let c = rng.random_range(0..cols);
        let out = data.row_mut(n);
        copy_window(images.image(img), images.width(), r, c, side, out);
        let (mean, std) = normalize_patch(out);
        means.push(mean);
        stds.push(std);
    }

    Ok(PatchSet { data, side, means, stds })
}
