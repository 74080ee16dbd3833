//! Flat binary container for feature matrices.
//!
//! Layout: 4-byte magic, row and column counts as little-endian u64, the
//! element width in bytes as little-endian u32 (always 4), then row-major
//! little-endian f32 values. Readers reject wrong magic, unsupported
//! widths, and files whose size disagrees with the header.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use hope_core::Mat;
use thiserror::Error;

pub const FEATURE_MAGIC: [u8; 4] = *b"HFM1";
pub const ELEMENT_WIDTH: u32 = 4;

#[derive(Debug, Error)]
pub enum FeatureFileError {
    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic {found:?}, expected {FEATURE_MAGIC:?}")]
    Magic { found: [u8; 4] },

    #[error("unsupported element width {0}, expected {ELEMENT_WIDTH}")]
    Width(u32),

    #[error("file holds {found} data bytes, header implies {expected}")]
    Length { expected: u64, found: u64 },

    #[error("header shape {rows}x{cols} overflows")]
    Overflow { rows: u64, cols: u64 },
}

pub fn write_features(path: &Path, m: &Mat) -> Result<(), FeatureFileError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&FEATURE_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    w.write_all(&ELEMENT_WIDTH.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.cols() * 4);
    for i in 0..m.rows() {
        buf.clear();
        for &v in m.row(i) {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Mat, FeatureFileError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != FEATURE_MAGIC {
        return Err(FeatureFileError::Magic { found: magic });
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let rows = u64::from_le_bytes(u64buf);
    r.read_exact(&mut u64buf)?;
    let cols = u64::from_le_bytes(u64buf);
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let width = u32::from_le_bytes(u32buf);
    if width != ELEMENT_WIDTH {
        return Err(FeatureFileError::Width(width));
    }

    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(u64::from(width)))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or(FeatureFileError::Overflow { rows, cols })?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() != count {
        return Err(FeatureFileError::Length {
            expected: count as u64,
            found: data.len() as u64,
        });
    }

    let mut m = Mat::zeros(rows as usize, cols as usize);
    for (v, bytes) in m.data_mut().iter_mut().zip(data.chunks_exact(4)) {
        *v = f64::from(f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]));
    }
    Ok(m)
}
