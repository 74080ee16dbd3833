//! Diagonal-covariance Gaussian mixture over the latent space.
//!
//! All densities and occupancies are computed in log domain. Gradients are
//! of the batch log-likelihood
//! `L1 = Σ_n ln Σ_k π_k N(Ux_n | μ_k, Σ_k)` with respect to π, μ, the
//! diagonal variances, and `U` itself:
//!
//! ```text
//! ∂L1/∂π_k = Σ_n γ_k(z_n)/π_k
//! ∂L1/∂μ_k = Σ_n γ_k(z_n) Σ_k⁻¹ (z_n − μ_k)
//! ∂L1/∂σ²_km = Σ_n γ_k(z_n) [ (z−μ)² − σ² ] / (2σ⁴)
//! ∂L1/∂U    = Σ_n Σ_k γ_k(z_n) Σ_k⁻¹ (μ_k − z_n) x_nᵀ
//! ```
//!
//! Variance positivity is structural in training (log-domain steps with a
//! floor on the exponentiated value); this module only assumes entries are
//! at least [`VARIANCE_FLOOR`].

use crate::mat::{logsumexp, Mat};
use crate::projection::ProjectionMatrix;
use crate::{HopeError, Result};
use rand::seq::SliceRandom;
use rand::Rng;

pub const VARIANCE_FLOOR: f64 = 1e-4;
pub const WEIGHT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGmm {
    weights: Vec<f64>,
    means: Mat,     // K×M
    variances: Mat, // K×M, entries ≥ VARIANCE_FLOOR
}

#[derive(Debug, Clone)]
pub struct GmmGradients {
    pub d_pi: Vec<f64>,
    pub d_mu: Mat,
    pub d_var: Mat,
    pub d_u: Mat,
}

fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(HopeError::InvalidArgument("mixture needs at least one component".into()));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || (sum - 1.0).abs() > 1e-6 {
        return Err(HopeError::InvalidArgument(format!(
            "weights must be a simplex (sum {sum})"
        )));
    }
    Ok(())
}

impl DiagonalGmm {
    /// Variance entries below the floor are raised to it.
    pub fn new(weights: Vec<f64>, means: Mat, mut variances: Mat) -> Result<Self> {
        check_simplex(&weights)?;
        let k = weights.len();
        if means.rows() != k || variances.rows() != k || means.cols() != variances.cols() {
            return Err(HopeError::DimensionMismatch(format!(
                "GMM shapes: {} weights, means {}x{}, variances {}x{}",
                k,
                means.rows(),
                means.cols(),
                variances.rows(),
                variances.cols()
            )));
        }
        if means.cols() == 0 {
            return Err(HopeError::InvalidArgument("latent dimension must be ≥ 1".into()));
        }
        for v in variances.data_mut() {
            if !v.is_finite() {
                return Err(HopeError::InvalidArgument("non-finite variance".into()));
            }
            *v = v.max(VARIANCE_FLOOR);
        }
        Ok(DiagonalGmm { weights, means, variances })
    }

    /// Means seeded from K distinct projected training points, variances 1,
    /// weights uniform.
    pub fn init_from_points<R: Rng + ?Sized>(k: usize, z: &Mat, rng: &mut R) -> Result<Self> {
        if k == 0 || k > z.rows() {
            return Err(HopeError::InvalidArgument(format!(
                "need 1 ≤ K ≤ N, got K={k}, N={}",
                z.rows()
            )));
        }
        let mut idx: Vec<usize> = (0..z.rows()).collect();
        idx.shuffle(rng);
        let mut means = Mat::zeros(k, z.cols());
        for (row, &i) in idx[..k].iter().enumerate() {
            means.row_mut(row).copy_from_slice(z.row(i));
        }
        let variances = Mat::from_vec(k, z.cols(), vec![1.0; k * z.cols()]);
        DiagonalGmm::new(vec![1.0 / k as f64; k], means, variances)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Mat {
        &self.means
    }

    pub fn variances(&self) -> &Mat {
        &self.variances
    }

    /// Trainer access; invariants (simplex, floor) are re-established by the
    /// trainer's post-update clamps.
    pub fn params_mut(&mut self) -> (&mut Vec<f64>, &mut Mat, &mut Mat) {
        (&mut self.weights, &mut self.means, &mut self.variances)
    }

    /// `ln N(z | μ_k, Σ_k)` with diagonal Σ.
    pub fn component_log_density(&self, k: usize, z: &[f64]) -> f64 {
        let mu = self.means.row(k);
        let var = self.variances.row(k);
        let mut acc = 0.0;
        for m in 0..z.len() {
            let d = z[m] - mu[m];
            acc += (2.0 * std::f64::consts::PI * var[m]).ln() + d * d / var[m];
        }
        -0.5 * acc
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "latent vector has dimension {}, model expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        Ok(())
    }

    /// Log-domain mixture density `ln Σ_k π_k N(z|μ_k,Σ_k)`.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.check_z(z)?;
        let scores: Vec<f64> = (0..self.k())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, z))
            .collect();
        Ok(logsumexp(&scores))
    }

    /// Occupancy γ with `γ_k ∝ π_k N(z|μ_k,Σ_k)`, exact unit sum.
    pub fn occupancy(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_z(z)?;
        let scores: Vec<f64> = (0..self.k())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, z))
            .collect();
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

    /// `L1 = Σ_n ln Σ_k π_k N(Ux_n | μ_k, Σ_k)`.
    pub fn log_likelihood(&self, u: &ProjectionMatrix, batch: &Mat) -> Result<f64> {
        self.check_batch(u, batch)?;
        let z = u.project_batch(batch);
        let mut total = 0.0;
        for n in 0..z.rows() {
            total += self.log_density(z.row(n))?;
        }
        Ok(total)
    }

    /// All four gradients of `L1` over the batch.
    pub fn gradients(&self, u: &ProjectionMatrix, batch: &Mat) -> Result<GmmGradients> {
        self.check_batch(u, batch)?;
        let kk = self.k();
        let m = self.latent_dim();
        let z = u.project_batch(batch);
        let n_rows = z.rows();

        let mut d_pi = vec![0.0; kk];
        let mut d_mu = Mat::zeros(kk, m);
        let mut d_var = Mat::zeros(kk, m);
        // per-sample latent pull g_n = Σ_k γ_k Σ_k⁻¹(μ_k − z_n); dU = Gᵀ X
        let mut pulls = Mat::zeros(n_rows, m);

        for n in 0..n_rows {
            let zn = z.row(n);
            let gamma = self.occupancy(zn)?;
            let pr = pulls.row_mut(n);
            for k in 0..kk {
                let g = gamma[k];
                if g == 0.0 {
                    continue;
                }
                d_pi[k] += g / self.weights[k];
                let mu = self.means.row(k);
                let var = self.variances.row(k);
                let dm = d_mu.row_mut(k);
                let dv = d_var.row_mut(k);
                for j in 0..m {
                    let diff = zn[j] - mu[j];
                    let iv = 1.0 / var[j];
                    let pull = g * diff * iv;
                    dm[j] += pull;
                    pr[j] -= pull;
                    dv[j] += g * (diff * diff - var[j]) * 0.5 * iv * iv;
                }
            }
        }
        let d_u = pulls.matmul_tn(batch);
        Ok(GmmGradients { d_pi, d_mu, d_var, d_u })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple(weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> DiagonalGmm {
        DiagonalGmm::new(weights, Mat::from_rows(&means), Mat::from_rows(&vars)).unwrap()
    }

    #[test]
    fn standard_normal_at_mode() {
        let g = simple(vec![1.0], vec![vec![0.0, 0.0]], vec![vec![1.0, 1.0]]);
        let u = ProjectionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let batch = Mat::from_rows(&[vec![0.0, 0.0]]);
        let l1 = g.log_likelihood(&u, &batch).unwrap();
        let want = -(2.0 * std::f64::consts::PI).ln();
        assert!((l1 - want).abs() < 1e-12, "{l1} vs {want}");
    }

    #[test]
    fn symmetric_pair_at_midpoint() {
        let g = simple(
            vec![0.5, 0.5],
            vec![vec![1.5], vec![-1.5]],
            vec![vec![0.7], vec![0.7]],
        );
        let u = ProjectionMatrix::from_rows(&[vec![1.0]]).unwrap();
        let batch = Mat::from_rows(&[vec![0.0]]);
        let l1 = g.log_likelihood(&u, &batch).unwrap();
        // mixture value at 0 equals either component's density there
        let want = g.component_log_density(0, &[0.0]);
        assert!((l1 - want).abs() < 1e-12, "{l1} vs {want}");
    }

    #[test]
    fn occupancy_trivial_and_symmetric() {
        let one = simple(vec![1.0], vec![vec![0.3, -0.2]], vec![vec![1.0, 2.0]]);
        assert_eq!(one.occupancy(&[0.0, 0.0]).unwrap(), vec![1.0]);

        let twin = simple(
            vec![0.5, 0.5],
            vec![vec![0.4], vec![0.4]],
            vec![vec![1.3], vec![1.3]],
        );
        let g = twin.occupancy(&[2.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn occupancy_survives_underflow() {
        let g = simple(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![1000.0]],
            vec![vec![VARIANCE_FLOOR], vec![VARIANCE_FLOOR]],
        );
        let occ = g.occupancy(&[0.0]).unwrap();
        assert!(occ.iter().all(|v| v.is_finite()));
        assert!((occ.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((occ[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_gradient_vanishes_at_batch_mean() {
        let g = simple(vec![1.0], vec![vec![0.25, -0.5]], vec![vec![1.0, 1.0]]);
        let u = ProjectionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        // batch mean equals μ exactly
        let batch = Mat::from_rows(&[vec![0.5, 0.0], vec![0.0, -1.0]]);
        let grads = g.gradients(&u, &batch).unwrap();
        for v in grads.d_mu.data() {
            assert!(v.abs() < 1e-10, "dMu {v}");
        }
    }

    #[test]
    fn separated_components_gate_gradients() {
        let g = simple(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![50.0]],
            vec![vec![1.0], vec![1.0]],
        );
        let u = ProjectionMatrix::from_rows(&[vec![1.0]]).unwrap();
        let batch = Mat::from_rows(&[vec![0.0]]); // sits exactly on μ₀
        let grads = g.gradients(&u, &batch).unwrap();
        assert!(grads.d_mu.row(0)[0].abs() < 1e-10);
        assert!(grads.d_mu.row(1)[0].abs() < 1e-10, "far component must stay silent");
    }

    #[test]
    fn rejects_bad_shapes_and_weights() {
        assert!(DiagonalGmm::new(vec![0.7, 0.7], Mat::zeros(2, 2), Mat::zeros(2, 2)).is_err());
        assert!(DiagonalGmm::new(vec![1.0], Mat::zeros(2, 2), Mat::zeros(2, 2)).is_err());
        let g = simple(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]);
        let u = ProjectionMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(g.log_likelihood(&u, &Mat::zeros(0, 2)).is_err(), "empty batch");
        let bad = Mat::from_rows(&[vec![f64::NAN, 0.0]]);
        assert!(g.log_likelihood(&u, &bad).is_err(), "non-finite input");
    }

    #[test]
    fn variance_floor_applies_on_construction() {
        let g = simple(vec![1.0], vec![vec![0.0]], vec![vec![1e-9]]);
        assert_eq!(g.variances().row(0)[0], VARIANCE_FLOOR);
    }
}
