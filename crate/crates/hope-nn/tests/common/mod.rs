//! Shared helpers for the network oracle tests: seeded RNG, relative error,
//! finite differences over network parameter groups, and a minimal MNIST
//! reader independent of the library's own dataset code.

#![allow(dead_code)]

use hope_core::Mat;
use hope_nn::{ce_objective, Network};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::PathBuf;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Mat {
    Mat::from_vec(rows, cols, rand_vec(rng, rows * cols, lo, hi))
}

/// Relative error with an absolute floor so that exact zeros compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// The supervised training loss: mean cross-entropy plus the penalty term.
pub fn total_loss(net: &Network, x: &Mat, y: &[usize], beta: f64) -> f64 {
    ce_objective(net, x, y).unwrap() + beta * net.penalty_sum().unwrap()
}

/// Central finite differences of `total_loss` over one parameter group,
/// exposed by `access` as a mutable flat slice.
pub fn fd_group<F>(
    net: &mut Network,
    x: &Mat,
    y: &[usize],
    beta: f64,
    h: f64,
    mut access: F,
) -> Vec<f64>
where
    F: FnMut(&mut Network) -> &mut [f64],
{
    let len = access(net).len();
    let mut g = vec![0.0; len];
    for i in 0..len {
        let orig = access(net)[i];
        access(net)[i] = orig + h;
        let fp = total_loss(net, x, y, beta);
        access(net)[i] = orig - h;
        let fm = total_loss(net, x, y, beta);
        access(net)[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central finite difference of `total_loss` along `dir` within one group.
pub fn fd_directional<F>(
    net: &mut Network,
    x: &Mat,
    y: &[usize],
    beta: f64,
    h: f64,
    dir: &[f64],
    mut access: F,
) -> f64
where
    F: FnMut(&mut Network) -> &mut [f64],
{
    let orig: Vec<f64> = access(net).to_vec();
    for (p, d) in access(net).iter_mut().zip(dir) {
        *p += h * d;
    }
    let fp = total_loss(net, x, y, beta);
    access(net).copy_from_slice(&orig);
    for (p, d) in access(net).iter_mut().zip(dir) {
        *p -= h * d;
    }
    let fm = total_loss(net, x, y, beta);
    access(net).copy_from_slice(&orig);
    (fp - fm) / (2.0 * h)
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("HOPE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/data/mnist"))
}

fn read_u32_be(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// First `n` images of an MNIST split as rows scaled to [0,1], plus labels.
/// Reads the raw IDX pair directly; any mismatch panics, since the tests
/// cannot run without the dataset.
pub fn load_mnist(split: &str, n: usize) -> (Mat, Vec<usize>) {
    load_mnist_from(split, 0, n)
}

/// Same, but skipping the first `skip` examples.
pub fn load_mnist_from(split: &str, skip: usize, n: usize) -> (Mat, Vec<usize>) {
    let dir = mnist_dir();
    let images = fs::read(dir.join(format!("{split}-images-idx3-ubyte")))
        .expect("MNIST image file (set HOPE_MNIST_DIR)");
    let labels = fs::read(dir.join(format!("{split}-labels-idx1-ubyte")))
        .expect("MNIST label file (set HOPE_MNIST_DIR)");
    assert_eq!(read_u32_be(&images, 0), 0x0000_0803, "image magic");
    assert_eq!(read_u32_be(&labels, 0), 0x0000_0801, "label magic");
    let count = read_u32_be(&images, 4) as usize;
    let rows = read_u32_be(&images, 8) as usize;
    let cols = read_u32_be(&images, 12) as usize;
    assert_eq!(read_u32_be(&labels, 4) as usize, count);
    assert!(skip + n <= count, "asked for {skip}+{n} of {count} examples");
    let d = rows * cols;
    let mut x = Mat::zeros(n, d);
    for i in 0..n {
        let at = 16 + (skip + i) * d;
        for (dst, &px) in x.row_mut(i).iter_mut().zip(&images[at..at + d]) {
            *dst = px as f64 / 255.0;
        }
    }
    let y: Vec<usize> = labels[8 + skip..8 + skip + n].iter().map(|&b| b as usize).collect();
    (x, y)
}
