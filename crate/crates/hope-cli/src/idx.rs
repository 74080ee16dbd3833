//! IDX dataset ingestion: the big-endian binary container used by MNIST.
//!
//! Layout: a u32 magic, big-endian dimension sizes, then raw bytes.
//! Image files carry magic 0x00000803 and three dims (count, rows, cols);
//! label files carry magic 0x00000801 and one dim (count).

use hope_pipeline::ImageSet;
use std::path::Path;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: magic {found:#010x}, expected {expected:#010x}")]
    Magic { path: String, found: u32, expected: u32 },
    #[error("{path}: needs {needed} bytes, file has {found}")]
    Length { path: String, needed: u64, found: u64 },
    #[error("dataset has {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("converting {path}: {source}")]
    Convert {
        path: String,
        #[source]
        source: hope_core::HopeError,
    },
}

/// A parsed image/label pair with matching counts.
#[derive(Debug, Clone)]
pub struct IdxDataset {
    /// count*height*width raw pixel bytes, row-major per image.
    pub images: Vec<u8>,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl IdxDataset {
    /// Pixels scaled to [0, 1].
    pub fn to_image_set(&self) -> Result<ImageSet, hope_core::HopeError> {
        ImageSet::from_bytes(self.count, self.height, self.width, &self.images)
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&b| b as usize).collect()
    }

    /// Keep only the first `n` examples (all of them if `n == 0` or `n >= count`).
    pub fn truncated(&self, n: usize) -> IdxDataset {
        if n == 0 || n >= self.count {
            return self.clone();
        }
        IdxDataset {
            images: self.images[..n * self.height * self.width].to_vec(),
            count: n,
            height: self.height,
            width: self.width,
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io { path: path.display().to_string(), source })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::Length {
            path: path.display().to_string(),
            needed: end as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

fn check_len(bytes: &[u8], needed: u128, path: &Path) -> Result<(), IdxError> {
    if bytes.len() as u128 != needed {
        return Err(IdxError::Length {
            path: path.display().to_string(),
            needed: needed.min(u64::MAX as u128) as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Parse an IDX image file into (count, height, width, pixels).
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>), IdxError> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::Magic {
            path: path.display().to_string(),
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let height = be_u32(&bytes, 8, path)? as usize;
    let width = be_u32(&bytes, 12, path)? as usize;
    let needed = 16u128 + count as u128 * height as u128 * width as u128;
    check_len(&bytes, needed, path)?;
    Ok((count, height, width, bytes[16..].to_vec()))
}

/// Parse an IDX label file into its byte labels.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    let bytes = read_file(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::Magic {
            path: path.display().to_string(),
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    check_len(&bytes, 8u128 + count as u128, path)?;
    Ok(bytes[8..].to_vec())
}

/// Load and pair an image file with a label file.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxDataset, IdxError> {
    let (count, height, width, images) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(IdxError::CountMismatch { images: count, labels: labels.len() });
    }
    Ok(IdxDataset { images, count, height, width, labels })
}
