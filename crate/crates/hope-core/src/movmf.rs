//! Mixture of von Mises-Fisher distributions over the latent sphere.
//!
//! Component `k` has unnormalized mean direction `μ_k`; its concentration
//! is `κ_k = |μ_k|`. The latent vector is `z̃ = Ux`, unit-normalized to
//! `z = z̃/|z̃|` before scoring (the normalization can be skipped by the
//! caller when `|z̃| ≈ 1` is guaranteed). Batch log-likelihood:
//!
//! ```text
//! L1 = Σ_n ln Σ_k π_k C_M(|μ_k|) e^{z_n·μ_k}
//! ```
//!
//! Gradients (occupancies γ from the same scores; `A = I_{M/2}/I_{M/2−1}`):
//!
//! ```text
//! ∂L1/∂π_k = Σ_n γ_k/π_k
//! ∂L1/∂μ_k = Σ_n γ_k [ z_n − (μ_k/|μ_k|) A(|μ_k|) ]
//! ∂L1/∂U   = Σ_n Σ_k (γ_k/|z̃_n|) (I − z_n z_nᵀ) μ_k x_nᵀ
//! ```
//!
//! The `(I − zzᵀ)/|z̃|` factor is the Jacobian of the unit normalization
//! and is part of the contract for `gradients`.

use crate::bessel::{bessel_ratio, log_vmf_normalizer};
use crate::mat::{dot, logsumexp, norm, Mat};
use crate::projection::ProjectionMatrix;
use crate::{HopeError, Result};
use rand::seq::SliceRandom;
use rand::Rng;

/// Concentrations are kept at or above this; `C_M` degenerates at κ = 0.
pub const KAPPA_FLOOR: f64 = 1e-3;

/// |z̃| below this cannot be unit-normalized meaningfully.
pub const PROJECTION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MovMf {
    weights: Vec<f64>,
    mean_dirs: Mat, // K×M, row k is μ_k with κ_k = |μ_k| > 0
}

#[derive(Debug, Clone)]
pub struct MovMfGradients {
    pub d_pi: Vec<f64>,
    pub d_mu: Mat,
    pub d_u: Mat,
}

impl MovMf {
    pub fn new(weights: Vec<f64>, mean_dirs: Mat) -> Result<Self> {
        if weights.is_empty() {
            return Err(HopeError::InvalidArgument("mixture needs at least one component".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || (sum - 1.0).abs() > 1e-6 {
            return Err(HopeError::InvalidArgument(format!(
                "weights must be a simplex (sum {sum})"
            )));
        }
        if mean_dirs.rows() != weights.len() || mean_dirs.cols() < 2 {
            return Err(HopeError::DimensionMismatch(format!(
                "mean directions {}x{} for {} weights (latent dim must be ≥ 2)",
                mean_dirs.rows(),
                mean_dirs.cols(),
                weights.len()
            )));
        }
        for k in 0..mean_dirs.rows() {
            let n = norm(mean_dirs.row(k));
            if !(n > 0.0) || !n.is_finite() {
                return Err(HopeError::DegenerateRow { index: k, norm: n });
            }
        }
        Ok(MovMf { weights, mean_dirs })
    }

    /// μ_k = κ₀ · (unit-normalized projected training point), π uniform.
    pub fn init_from_points<R: Rng + ?Sized>(
        k: usize,
        z: &Mat,
        kappa0: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 || k > z.rows() {
            return Err(HopeError::InvalidArgument(format!(
                "need 1 ≤ K ≤ N, got K={k}, N={}",
                z.rows()
            )));
        }
        let mut idx: Vec<usize> = (0..z.rows()).collect();
        idx.shuffle(rng);
        let mut dirs = Mat::zeros(k, z.cols());
        let mut taken = 0;
        for &i in idx.iter() {
            let n = norm(z.row(i));
            if n < PROJECTION_FLOOR {
                continue;
            }
            let row = dirs.row_mut(taken);
            for (dst, &src) in row.iter_mut().zip(z.row(i)) {
                *dst = kappa0 * src / n;
            }
            taken += 1;
            if taken == k {
                break;
            }
        }
        if taken < k {
            return Err(HopeError::InvalidArgument(
                "not enough non-degenerate points to seed components".into(),
            ));
        }
        MovMf::new(vec![1.0 / k as f64; k], dirs)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_dirs.cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean_dirs(&self) -> &Mat {
        &self.mean_dirs
    }

    pub fn kappas(&self) -> Vec<f64> {
        (0..self.k()).map(|k| norm(self.mean_dirs.row(k))).collect()
    }

    /// Trainer access; invariants are re-established by post-update clamps.
    pub fn params_mut(&mut self) -> (&mut Vec<f64>, &mut Mat) {
        (&mut self.weights, &mut self.mean_dirs)
    }

    /// Drops components with π_k below `floor` and renormalizes the rest.
    /// Returns the number of dropped components.
    pub fn prune_empty(&mut self, floor: f64) -> Result<usize> {
        let keep: Vec<usize> = (0..self.k()).filter(|&k| self.weights[k] >= floor).collect();
        if keep.is_empty() {
            return Err(HopeError::InvalidArgument("pruning would remove every component".into()));
        }
        let dropped = self.k() - keep.len();
        if dropped == 0 {
            return Ok(0);
        }
        let mut dirs = Mat::zeros(keep.len(), self.latent_dim());
        let mut weights = Vec::with_capacity(keep.len());
        for (row, &k) in keep.iter().enumerate() {
            dirs.row_mut(row).copy_from_slice(self.mean_dirs.row(k));
            weights.push(self.weights[k]);
        }
        let sum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= sum;
        }
        self.weights = weights;
        self.mean_dirs = dirs;
        Ok(dropped)
    }

    /// `ln π_k + ln C_M(κ_k)` for every component.
    pub fn log_coefficients(&self) -> Result<Vec<f64>> {
        let m = self.latent_dim();
        (0..self.k())
            .map(|k| {
                let kappa = norm(self.mean_dirs.row(k));
                Ok(self.weights[k].ln() + log_vmf_normalizer(m, kappa)?)
            })
            .collect()
    }

    /// Per-component log scores `ln π_k + ln C_M(κ_k) + z·μ_k` for a unit z.
    pub fn component_log_scores(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "latent vector has dimension {}, model expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        let coeffs = self.log_coefficients()?;
        Ok((0..self.k())
            .map(|k| coeffs[k] + dot(z, self.mean_dirs.row(k)))
            .collect())
    }

    /// Occupancy per component; requires `|z| = 1` within 1e-6.
    pub fn occupancy(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = norm(z);
        if (n - 1.0).abs() > 1e-6 {
            return Err(HopeError::InvalidArgument(format!(
                "occupancy expects a unit vector, |z| = {n}"
            )));
        }
        let scores = self.component_log_scores(z)?;
        let lse = logsumexp(&scores);
        let mut g: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
        let sum: f64 = g.iter().sum();
        for v in g.iter_mut() {
            *v /= sum;
        }
        Ok(g)
    }

    fn check_batch(&self, u: &ProjectionMatrix, batch: &Mat) -> Result<()> {
        if u.latent_dim() != self.latent_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "projection latent dim {} vs mixture dim {}",
                u.latent_dim(),
                self.latent_dim()
            )));
        }
        if batch.cols() != u.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "batch dimension {} vs projection input dim {}",
                batch.cols(),
                u.input_dim()
            )));
        }
        if batch.rows() == 0 {
            return Err(HopeError::InvalidArgument("empty batch".into()));
        }
        if !batch.is_finite() {
            return Err(HopeError::Numeric("non-finite value in batch".into()));
        }
        Ok(())
    }

    /// Projects the batch and unit-normalizes each row when requested.
    /// Returns (Z, |z̃| per row).
    fn latent_batch(
        &self,
        u: &ProjectionMatrix,
        batch: &Mat,
        normalize_z: bool,
    ) -> Result<(Mat, Vec<f64>)> {
        let mut z = u.project_batch(batch);
        let mut norms = Vec::with_capacity(z.rows());
        for n in 0..z.rows() {
            let nr = norm(z.row(n));
            if normalize_z {
                if nr < PROJECTION_FLOOR {
                    return Err(HopeError::DegenerateProjection { index: n, norm: nr });
                }
                let inv = 1.0 / nr;
                for v in z.row_mut(n) {
                    *v *= inv;
                }
            }
            norms.push(nr);
        }
        Ok((z, norms))
    }

    /// `L1 = Σ_n ln Σ_k π_k C_M(|μ_k|) e^{z_n·μ_k}` via log-sum-exp.
    ///
    /// With `normalize_z` off the caller asserts `|z̃| ≈ 1`.
    pub fn log_likelihood(
        &self,
        u: &ProjectionMatrix,
        batch: &Mat,
        normalize_z: bool,
    ) -> Result<f64> {
        self.check_batch(u, batch)?;
        let (z, _) = self.latent_batch(u, batch, normalize_z)?;
        let coeffs = self.log_coefficients()?;
        // scores = Z μᵀ + coeffs (row-broadcast)
        let mut scores = z.matmul_nt(&self.mean_dirs);
        let mut total = 0.0;
        for n in 0..scores.rows() {
            let row = scores.row_mut(n);
            for (s, c) in row.iter_mut().zip(coeffs.iter()) {
                *s += c;
            }
            total += logsumexp(row);
        }
        Ok(total)
    }

    /// Gradients of `L1` with the unit-normalization Jacobian included.
    pub fn gradients(&self, u: &ProjectionMatrix, batch: &Mat) -> Result<MovMfGradients> {
        self.check_batch(u, batch)?;
        let kk = self.k();
        let m = self.latent_dim();
        let (z, znorms) = self.latent_batch(u, batch, true)?;
        let coeffs = self.log_coefficients()?;
        let n_rows = z.rows();

        // occupancies Γ (N×K) from scores
        let mut gamma = z.matmul_nt(&self.mean_dirs);
        for n in 0..n_rows {
            let row = gamma.row_mut(n);
            for (s, c) in row.iter_mut().zip(coeffs.iter()) {
                *s += c;
            }
            let lse = logsumexp(row);
            let mut sum = 0.0;
            for s in row.iter_mut() {
                *s = (*s - lse).exp();
                sum += *s;
            }
            for s in row.iter_mut() {
                *s /= sum;
            }
        }

        let occ_sum: Vec<f64> = (0..kk)
            .map(|k| (0..n_rows).map(|n| gamma[(n, k)]).sum())
            .collect();
        let d_pi: Vec<f64> = (0..kk).map(|k| occ_sum[k] / self.weights[k]).collect();

        // dMu = Γᵀ Z − diag(occ_sum) · (μ_k/κ_k) A(κ_k)
        let mut d_mu = gamma.matmul_tn(&z);
        for k in 0..kk {
            let kappa = norm(self.mean_dirs.row(k));
            let a = bessel_ratio(m as f64 / 2.0, kappa)?;
            let scale = occ_sum[k] * a / kappa;
            let mu = self.mean_dirs.row(k);
            let dm = d_mu.row_mut(k);
            for j in 0..m {
                dm[j] -= scale * mu[j];
            }
        }

        // dU = Σ_n w_n x_nᵀ with w_n = (I − z z ᵀ) v_n / |z̃_n|, v_n = Σ_k γ_k μ_k
        let v = gamma.matmul(&self.mean_dirs); // N×M
        let mut w = Mat::zeros(n_rows, m);
        for n in 0..n_rows {
            let zn = z.row(n);
            let vn = v.row(n);
            let zv = dot(zn, vn);
            let inv = 1.0 / znorms[n];
            let wr = w.row_mut(n);
            for j in 0..m {
                wr[j] = (vn[j] - zv * zn[j]) * inv;
            }
        }
        let d_u = w.matmul_tn(batch);

        Ok(MovMfGradients { d_pi, d_mu, d_u })
    }
}
