//! Lloyd clustering for the kmeans and spkmeans feature extractors.
//!
//! kmeans assigns by Euclidean distance; spkmeans works on the unit sphere
//! and assigns by cosine similarity with unit-norm centroids. Both stop
//! when fewer than 0.1% of assignments change or after 100 rounds, and
//! reseed empty clusters from the point farthest from its centroid.

use hope_core::mat::norm;
use hope_core::{HopeError, Mat, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::extractor::FeatureExtractor;

pub const MAX_LLOYD_ROUNDS: usize = 100;
/// Stop once the changed-assignment fraction drops below this.
pub const ASSIGNMENT_CHANGE_TOL: f64 = 1e-3;
/// Rows shorter than this are left as zero vectors when normalizing.
pub const NORM_FLOOR: f64 = 1e-12;

/// Fits `k` Euclidean centroids and returns a kmeans extractor whose
/// threshold defaults to the mean distance between a training patch and
/// its centroid.
pub fn fit_kmeans(patches: &Mat, k: usize, seed: u64) -> Result<FeatureExtractor> {
    let centroids = lloyd(patches, k, seed, Metric::Euclidean)?;
    let assignments = assign(patches, &centroids, Metric::Euclidean);
    let mean_distance = assignments.iter().map(|a| a.score.sqrt()).sum::<f64>()
        / patches.rows() as f64;
    Ok(FeatureExtractor::Kmeans { centroids, epsilon: mean_distance })
}

/// Fits `k` unit-norm centroids on unit-normalized patches and returns a
/// spkmeans extractor with threshold zero.
pub fn fit_spkmeans(patches: &Mat, k: usize, seed: u64) -> Result<FeatureExtractor> {
    let unit = normalized_rows(patches);
    let centroids = lloyd(&unit, k, seed, Metric::Cosine)?;
    Ok(FeatureExtractor::Spkmeans { centroids, epsilon: 0.0 })
}

/// Unit-normalizes every row, leaving rows below [`NORM_FLOOR`] at zero.
pub fn normalized_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let n = norm(out.row(i));
        if n >= NORM_FLOOR {
            let inv = 1.0 / n;
            for v in out.row_mut(i) {
                *v *= inv;
            }
        }
    }
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Metric {
    Euclidean,
    Cosine,
}

#[derive(Clone, Copy)]
struct Assignment {
    cluster: usize,
    /// Squared distance (Euclidean) or similarity (cosine) to the centroid.
    score: f64,
}

fn lloyd(points: &Mat, k: usize, seed: u64, metric: Metric) -> Result<Mat> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(HopeError::InvalidArgument(format!(
            "need 1 ≤ K ≤ N, got K={k}, N={n}"
        )));
    }
    if !points.is_finite() {
        return Err(HopeError::Numeric("non-finite sample".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut centroids = Mat::zeros(k, points.cols());
    for (c, &i) in idx.iter().take(k).enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }

    let mut assignments = assign(points, &centroids, metric);
    for _ in 0..MAX_LLOYD_ROUNDS {
        update_centroids(points, &assignments, &mut centroids, metric);
        let next = assign(points, &centroids, metric);
        let changed = assignments
            .iter()
            .zip(next.iter())
            .filter(|(a, b)| a.cluster != b.cluster)
            .count();
        assignments = next;
        if (changed as f64) < ASSIGNMENT_CHANGE_TOL * n as f64 {
            break;
        }
    }
    Ok(centroids)
}

fn assign(points: &Mat, centroids: &Mat, metric: Metric) -> Vec<Assignment> {
    let inner = points.matmul_nt(centroids);
    let centroid_sq: Vec<f64> = (0..centroids.rows())
        .map(|c| {
            let row = centroids.row(c);
            row.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();

    (0..points.rows())
        .map(|i| {
            let scores = inner.row(i);
            match metric {
                Metric::Euclidean => {
                    let point_sq: f64 = points.row(i).iter().map(|v| v * v).sum();
                    let mut best = Assignment { cluster: 0, score: f64::INFINITY };
                    for (c, s) in scores.iter().enumerate() {
                        let d2 = (point_sq - 2.0 * s + centroid_sq[c]).max(0.0);
                        if d2 < best.score {
                            best = Assignment { cluster: c, score: d2 };
                        }
                    }
                    best
                }
                Metric::Cosine => {
                    let mut best = Assignment { cluster: 0, score: f64::NEG_INFINITY };
                    for (c, &s) in scores.iter().enumerate() {
                        if s > best.score {
                            best = Assignment { cluster: c, score: s };
                        }
                    }
                    best
                }
            }
        })
        .collect()
}

fn update_centroids(
    points: &Mat,
    assignments: &[Assignment],
    centroids: &mut Mat,
    metric: Metric,
) {
    let k = centroids.rows();
    centroids.fill(0.0);
    let mut counts = vec![0usize; k];
    for (i, a) in assignments.iter().enumerate() {
        counts[a.cluster] += 1;
        for (acc, v) in centroids.row_mut(a.cluster).iter_mut().zip(points.row(i)) {
            *acc += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for v in centroids.row_mut(c) {
                *v *= inv;
            }
        }
        let degenerate = match metric {
            Metric::Euclidean => counts[c] == 0,
            Metric::Cosine => counts[c] == 0 || norm(centroids.row(c)) < NORM_FLOOR,
        };
        if degenerate {
            let far = farthest_point(assignments, metric);
            centroids.row_mut(c).copy_from_slice(points.row(far));
        }
        if metric == Metric::Cosine {
            let n = norm(centroids.row(c));
            if n >= NORM_FLOOR {
                let inv = 1.0 / n;
                for v in centroids.row_mut(c) {
                    *v *= inv;
                }
            }
        }
    }
}

/// Index of the point worst served by its centroid: largest squared
/// distance under Euclidean, smallest similarity under cosine.
fn farthest_point(assignments: &[Assignment], metric: Metric) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, a) in assignments.iter().enumerate() {
        let badness = match metric {
            Metric::Euclidean => a.score,
            Metric::Cosine => -a.score,
        };
        if badness > best_score {
            best_score = badness;
            best = i;
        }
    }
    best
}
