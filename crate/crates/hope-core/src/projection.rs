//! The projection matrix `U` and its orthogonality machinery.
//!
//! `U` is `M×D`, stored row-major; rows are the projection directions
//! `u_i`. Orthogonality is never enforced structurally. Training instead
//! penalizes
//!
//! ```text
//! D(U) = Σ_{i<j} |u_i·u_j| / (|u_i||u_j|)
//! ```
//!
//! whose gradient has the closed matrix form `∂D/∂U = (D − B)U` with
//! `d_ij = sign(u_i·u_j)/(|u_i||u_j|)` and `b_ii = Σ_j g_ij/(u_i·u_i)`.
//! Including `j = i` in both sums is safe: the diagonal contributions
//! cancel exactly, and the result equals the per-row sum
//! `Σ_{j≠i} [d_ij u_j − g_ij u_i/|u_i|²]`. Both forms are public so they
//! can be cross-checked; the matrix form is the one used in training.
//!
//! `sign(0)` is taken as 0, a valid subgradient at the kink of `|·|`.

use crate::mat::{dot, norm, Mat};
use crate::{HopeError, Result};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    u: Mat,
}

fn sign0(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum()
    }
}

impl ProjectionMatrix {
    /// Wraps an `M×D` matrix. `M ≤ D` and every row must have a usable norm.
    pub fn new(u: Mat) -> Result<Self> {
        if u.rows() == 0 || u.rows() > u.cols() {
            return Err(HopeError::InvalidArgument(format!(
                "projection must be M×D with 1 ≤ M ≤ D, got {}x{}",
                u.rows(),
                u.cols()
            )));
        }
        let p = ProjectionMatrix { u };
        p.checked_norms()?;
        Ok(p)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Mat::from_rows(rows))
    }

    /// Rows uniform in `±γ√6/√(M+D)` with `γ = 0.5`, then unit-normalized.
    pub fn random_init<R: Rng + ?Sized>(m: usize, d: usize, rng: &mut R) -> Result<Self> {
        let bound = 0.5 * (6.0 / (m + d) as f64).sqrt();
        let mut u = Mat::zeros(m, d);
        for v in u.data_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        let mut p = Self::new(u)?;
        p.normalize_rows()?;
        Ok(p)
    }

    pub fn latent_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.u.cols()
    }

    pub fn mat(&self) -> &Mat {
        &self.u
    }

    /// Mutable access for SGD updates; the caller is responsible for
    /// re-establishing row-norm invariants afterwards.
    pub fn mat_mut(&mut self) -> &mut Mat {
        &mut self.u
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.u.rows()).map(|i| norm(self.u.row(i))).collect()
    }

    fn checked_norms(&self) -> Result<Vec<f64>> {
        let norms = self.row_norms();
        for (i, &n) in norms.iter().enumerate() {
            if !(n > f64::MIN_POSITIVE) || !n.is_finite() {
                return Err(HopeError::DegenerateRow { index: i, norm: n });
            }
        }
        Ok(norms)
    }

    /// `z = Ux`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "project: x has dimension {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.u.matvec(x))
    }

    /// `Z = XUᵀ` for a batch with samples as rows.
    pub fn project_batch(&self, x: &Mat) -> Mat {
        assert_eq!(x.cols(), self.input_dim(), "project_batch dimension");
        x.matmul_nt(&self.u)
    }

    /// `x̄ = (I − UᵀU)x`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.project(x)?;
        let xt = self.u.matvec_t(&z);
        Ok(x.iter().zip(xt.iter()).map(|(a, b)| a - b).collect())
    }

    /// `D(U) = Σ_{i<j} |u_i·u_j|/(|u_i||u_j|)`.
    pub fn penalty(&self) -> Result<f64> {
        let norms = self.checked_norms()?;
        let g = self.u.matmul_nt(&self.u);
        let m = self.latent_dim();
        let mut sum = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                sum += g[(i, j)].abs() / (norms[i] * norms[j]);
            }
        }
        Ok(sum)
    }

    /// `Σ_{i≠j} g_ij` over ordered pairs; equals `2·penalty`.
    pub fn correlation_sum(&self) -> Result<f64> {
        let norms = self.checked_norms()?;
        let m = self.latent_dim();
        let mut sum = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    sum += dot(self.u.row(i), self.u.row(j)).abs() / (norms[i] * norms[j]);
                }
            }
        }
        Ok(sum)
    }

    /// `∂D/∂U = (D − B)U`, the matrix form used in training.
    pub fn penalty_gradient(&self) -> Result<Mat> {
        let norms = self.checked_norms()?;
        let g = self.u.matmul_nt(&self.u);
        let m = self.latent_dim();
        // a = D − B; diagonal holds d_ii − b_ii, whose u_i contributions
        // cancel against the j=i terms folded into b_ii (g_ii = 1).
        let mut a = Mat::zeros(m, m);
        for i in 0..m {
            let mut gsum = 0.0;
            for j in 0..m {
                gsum += g[(i, j)].abs() / (norms[i] * norms[j]);
                if i != j {
                    a[(i, j)] = sign0(g[(i, j)]) / (norms[i] * norms[j]);
                }
            }
            a[(i, i)] = 1.0 / (norms[i] * norms[i]) - gsum / g[(i, i)];
        }
        Ok(a.matmul(&self.u))
    }

    /// Per-row form of the same gradient; reference implementation for
    /// cross-checking the matrix form.
    pub fn penalty_gradient_per_row(&self) -> Result<Mat> {
        let norms = self.checked_norms()?;
        let m = self.latent_dim();
        let d = self.input_dim();
        let mut grad = Mat::zeros(m, d);
        for i in 0..m {
            for j in 0..m {
                if j == i {
                    continue;
                }
                let uij = dot(self.u.row(i), self.u.row(j));
                let dij = sign0(uij) / (norms[i] * norms[j]);
                let gij = uij.abs() / (norms[i] * norms[j]);
                let pull = gij / (norms[i] * norms[i]);
                let (gi, uj, ui) = (grad.row_mut(i), self.u.row(j), self.u.row(i));
                for c in 0..d {
                    gi[c] += dij * uj[c] - pull * ui[c];
                }
            }
        }
        Ok(grad)
    }

    /// Scales every row to unit norm; direction preserved.
    pub fn normalize_rows(&mut self) -> Result<()> {
        let norms = self.checked_norms()?;
        for (i, &n) in norms.iter().enumerate() {
            let inv = 1.0 / n;
            for v in self.u.row_mut(i) {
                *v *= inv;
            }
        }
        Ok(())
    }

    /// Free-norm mode keeps `|u_i| ≥ min`; rows below are scaled up.
    pub fn clamp_row_norms_min(&mut self, min: f64) -> Result<()> {
        let norms = self.checked_norms()?;
        for (i, &n) in norms.iter().enumerate() {
            if n < min {
                let s = min / n;
                for v in self.u.row_mut(i) {
                    *v *= s;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_identity_and_selection() {
        let p = ProjectionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(p.project(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);

        let sel = ProjectionMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(sel.project(&[3.0, 4.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn project_rejects_wrong_dimension() {
        let p = ProjectionMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            p.project(&[1.0, 2.0, 3.0]),
            Err(HopeError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn residual_drops_row_space_component() {
        let p = ProjectionMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let r = p.residual(&[3.0, 4.0]).unwrap();
        assert!((r[0] - 0.0).abs() < 1e-15 && (r[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn residual_vanishes_for_complete_basis() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = ProjectionMatrix::from_rows(&[vec![s, s], vec![s, -s]]).unwrap();
        let r = p.residual(&[0.3, -1.7]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-10), "residual {r:?}");
    }

    #[test]
    fn penalty_trivial_cases() {
        let id = ProjectionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(id.penalty().unwrap(), 0.0);

        let par = ProjectionMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!((par.penalty().unwrap() - 1.0).abs() < 1e-15);
        assert!((par.correlation_sum().unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_zero_at_orthogonal_point() {
        let id = ProjectionMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = id.penalty_gradient().unwrap();
        assert!(g.data().iter().all(|&v| v.abs() < 1e-15), "subgradient at 0 dots");
    }

    #[test]
    fn gradient_forms_agree_at_angle() {
        let th = std::f64::consts::FRAC_PI_4;
        let p =
            ProjectionMatrix::from_rows(&[vec![1.0, 0.0], vec![th.cos(), th.sin()]]).unwrap();
        let a = p.penalty_gradient().unwrap();
        let b = p.penalty_gradient_per_row().unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn normalize_rows_examples() {
        let mut p = ProjectionMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        p.normalize_rows().unwrap();
        assert!((p.mat().row(0)[0] - 0.6).abs() < 1e-15);
        assert!((p.mat().row(0)[1] - 0.8).abs() < 1e-15);

        let before = p.clone();
        p.normalize_rows().unwrap();
        assert!(p.mat().max_abs_diff(before.mat()) < 1e-15, "idempotent on unit rows");
    }

    #[test]
    fn zero_row_is_degenerate() {
        let err = ProjectionMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, HopeError::DegenerateRow { index: 0, .. }));
    }

    #[test]
    fn clamp_row_norms_scales_up_short_rows() {
        let mut p = ProjectionMatrix::from_rows(&[vec![0.3, 0.0], vec![0.0, 2.0]]).unwrap();
        p.clamp_row_norms_min(1.0).unwrap();
        let n = p.row_norms();
        assert!((n[0] - 1.0).abs() < 1e-12, "short row raised to the floor");
        assert!((n[1] - 2.0).abs() < 1e-12, "long row untouched");
    }
}
