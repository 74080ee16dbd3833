//! Convolutional featurization with quadrant pooling.
//!
//! Every stride-1 window of an image is normalized like a training patch
//! and featurized; the per-window activations are summed within the image
//! quadrant holding the window's center, and the four sums concatenate to
//! a 4K-vector (top-left, top-right, bottom-left, bottom-right).

use hope_core::{HopeError, Mat, Result};

use crate::extractor::FeatureExtractor;
use crate::image::ImageSet;
use crate::patch::{copy_window, normalize_patch};

/// Quadrant of the window whose top-left corner is `(r, c)`: the window
/// center `r + (side−1)/2` is compared against the image midline, so
/// `2r + side − 1 < extent` selects the top (or left) half.
fn quadrant(r: usize, c: usize, side: usize, height: usize, width: usize) -> usize {
    let bottom = 2 * r + side - 1 >= height;
    let right = 2 * c + side - 1 >= width;
    2 * usize::from(bottom) + usize::from(right)
}

/// Featurizes every window of one image and pools per quadrant into a
/// `4K`-vector.
pub fn convolve_pool(
    extractor: &FeatureExtractor,
    image: &[f64],
    height: usize,
    width: usize,
    side: usize,
) -> Result<Vec<f64>> {
    if side == 0 || side > height || side > width {
        return Err(HopeError::InvalidArgument(format!(
            "window side {side} does not fit a {height}x{width} image"
        )));
    }
    if image.len() != height * width {
        return Err(HopeError::DimensionMismatch(format!(
            "image buffer holds {} pixels, shape says {}",
            image.len(),
            height * width
        )));
    }

    let rows = height - side + 1;
    let cols = width - side + 1;
    let mut windows = Mat::zeros(rows * cols, side * side);
    for r in 0..rows {
        for c in 0..cols {
            let out = windows.row_mut(r * cols + c);
            copy_window(image, width, r, c, side, out);
            normalize_patch(out);
        }
    }

    let feats = extractor.featurize_batch(&windows)?;
    let k = feats.cols();
    let mut pooled = vec![0.0; 4 * k];
    for r in 0..rows {
        for c in 0..cols {
            let q = quadrant(r, c, side, height, width);
            let dst = &mut pooled[q * k..(q + 1) * k];
            for (d, v) in dst.iter_mut().zip(feats.row(r * cols + c)) {
                *d += v;
            }
        }
    }
    Ok(pooled)
}

/// [`convolve_pool`] over a whole image set, one pooled row per image.
pub fn pool_images(
    extractor: &FeatureExtractor,
    images: &ImageSet,
    side: usize,
) -> Result<Mat> {
    let k = extractor.k();
    if k == 0 {
        return Err(HopeError::InvalidArgument(
            "extractor is not fitted; fit or load parameters first".into(),
        ));
    }
    let mut out = Mat::zeros(images.count(), 4 * k);
    for i in 0..images.count() {
        let pooled =
            convolve_pool(extractor, images.image(i), images.height(), images.width(), side)?;
        out.row_mut(i).copy_from_slice(&pooled);
    }
    Ok(out)
}
