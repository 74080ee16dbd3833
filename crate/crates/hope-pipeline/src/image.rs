//! Grayscale image container feeding the patch pipeline.

use hope_core::{HopeError, Result};

/// A stack of equally sized grayscale images, one row-major slab per image.
#[derive(Debug, Clone)]
pub struct ImageSet {
    data: Vec<f64>,
    count: usize,
    height: usize,
    width: usize,
}

impl ImageSet {
    pub fn new(count: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(HopeError::InvalidArgument(format!(
                "image shape {height}x{width} is empty"
            )));
        }
        if data.len() != count * height * width {
            return Err(HopeError::DimensionMismatch(format!(
                "{count} images of {height}x{width} need {} values, got {}",
                count * height * width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(HopeError::Numeric("non-finite pixel value".into()));
        }
        Ok(ImageSet { data, count, height, width })
    }

    /// Builds from raw bytes, mapping pixel values into `[0, 1]`.
    pub fn from_bytes(count: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        ImageSet::new(count, height, width, data)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Row-major pixels of image `i`.
    pub fn image(&self, i: usize) -> &[f64] {
        let stride = self.height * self.width;
        &self.data[i * stride..(i + 1) * stride]
    }
}
