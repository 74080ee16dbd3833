#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

pub fn write_idx_images(path: &Path, count: u32, height: u32, width: u32, pixels: &[u8]) {
    assert_eq!(pixels.len(), (count * height * width) as usize);
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&count.to_be_bytes());
    bytes.extend_from_slice(&height.to_be_bytes());
    bytes.extend_from_slice(&width.to_be_bytes());
    bytes.extend_from_slice(pixels);
    std::fs::write(path, bytes).unwrap();
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    std::fs::write(path, bytes).unwrap();
}

/// Two visually distinct 8x8 classes: bright top half vs bright bottom
/// half, plus deterministic per-pixel jitter.
pub fn synth_dataset(n: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let mut pixels = Vec::with_capacity(n * 64);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        labels.push(class);
        for r in 0..8 {
            for _c in 0..8 {
                let bright = (class == 0 && r < 4) || (class == 1 && r >= 4);
                let base: i32 = if bright { 200 } else { 30 };
                let jitter = (next() % 41) as i32 - 20;
                pixels.push((base + jitter).clamp(0, 255) as u8);
            }
        }
    }
    (pixels, labels)
}

/// A synthetic labeled set written as IDX image + label files.
pub struct Fixture {
    pub images: PathBuf,
    pub labels: PathBuf,
}

pub fn write_fixture(dir: &Path, stem: &str, n: usize, seed: u64) -> Fixture {
    let (pixels, labels) = synth_dataset(n, seed);
    let images = dir.join(format!("{stem}-images.idx"));
    let labels_path = dir.join(format!("{stem}-labels.idx"));
    write_idx_images(&images, n as u32, 8, 8, &pixels);
    write_idx_labels(&labels_path, &labels);
    Fixture { images, labels: labels_path }
}

pub fn hope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hope")).args(args).output().expect("spawn hope binary")
}

pub fn stdout_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed ({:?}):\n{}\n{}",
        out.status.code(),
        stdout_str(out),
        stderr_str(out)
    );
}

/// Pull `key=value` out of the first stdout line containing `marker`.
pub fn field<'a>(stdout: &'a str, marker: &str, key: &str) -> &'a str {
    let line = stdout
        .lines()
        .find(|l| l.contains(marker))
        .unwrap_or_else(|| panic!("no line with {marker:?} in:\n{stdout}"));
    let pattern = format!("{key}=");
    let start = line
        .find(&pattern)
        .unwrap_or_else(|| panic!("no field {key:?} in line {line:?}"))
        + pattern.len();
    line[start..].split_whitespace().next().unwrap()
}

/// Record lines with wall-clock fields stripped, for run-to-run comparison.
pub fn deterministic_lines(stdout: &str) -> Vec<String> {
    stdout
        .lines()
        .map(|l| {
            l.split_whitespace()
                .filter(|tok| !tok.starts_with("seconds="))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
