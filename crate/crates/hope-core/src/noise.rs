//! Residual-noise likelihood `L2`, the closed-form σ² update, and the
//! free-norm (non-orthonormal) variant with its Jacobian term.
//!
//! Orthonormal mode takes the residual as `x̄ = (I − UᵀU)x`, so
//! `nᵀn = |x̄|²` and
//!
//! ```text
//! L2(U,σ) = −(N(D−M)/2) ln σ² − (1/2σ²) Σ_n nᵀn
//! ∂L2/∂U  = (1/σ²) Σ_n U [ x x̄ᵀ + x̄ xᵀ ]          (full form)
//! σ²      = (1/(N(D−M))) Σ_n nᵀn                    (closed-form argmax)
//! ```
//!
//! Free-norm mode drops the unit-row assumption: with `G = UUᵀ`,
//! `nᵀn = xᵀ[I − Uᵀ G⁻¹ U]x`, the `ln σ²` coefficient becomes `N/2`
//! (the two normalizations differ in the source material; both are kept
//! as stated), and
//!
//! ```text
//! ∂L2/∂U = (1/σ²) Σ_n (G⁻¹ U x_n) x_nᵀ [I − Uᵀ G⁻¹ U]
//! J(U)   = −N Σ_i ln|u_i|,   ∂J/∂U = −N G⁻¹ U
//! ```
//!
//! The two J forms coincide (value and gradient) whenever the rows of `U`
//! are orthogonal, which the penalty maintains in free-norm training.

use crate::mat::{cholesky, cholesky_solve_mat, norm, Mat};
use crate::projection::ProjectionMatrix;
use crate::{HopeError, Result};

pub const SIGMA2_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Orthonormal,
    FreeNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub sigma2: f64,
    pub mode: NoiseMode,
    /// σ² held constant during training instead of re-estimated.
    pub fixed: bool,
}

impl NoiseModel {
    pub fn new(sigma2: f64, mode: NoiseMode, fixed: bool) -> Self {
        NoiseModel { sigma2: sigma2.max(SIGMA2_FLOOR), mode, fixed }
    }
}

fn check_batch(u: &ProjectionMatrix, batch: &Mat) -> Result<()> {
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
    Ok(())
}

/// Residual energies `nᵀn` per sample under the given mode.
fn residual_energies(u: &ProjectionMatrix, batch: &Mat, mode: NoiseMode) -> Result<Vec<f64>> {
    let z = u.project_batch(batch); // N×M
    match mode {
        NoiseMode::Orthonormal => {
            let xt = z.matmul(u.mat()); // x̃ rows
            Ok((0..batch.rows())
                .map(|n| {
                    batch
                        .row(n)
                        .iter()
                        .zip(xt.row(n))
                        .map(|(x, t)| (x - t) * (x - t))
                        .sum()
                })
                .collect())
        }
        NoiseMode::FreeNorm => {
            let g = u.mat().matmul_nt(u.mat());
            let l = cholesky(&g).ok_or(HopeError::SingularProjection)?;
            // w_n = G⁻¹ z_n for all n at once
            let w = cholesky_solve_mat(&l, &z.transpose()); // M×N
            Ok((0..batch.rows())
                .map(|n| {
                    let x2: f64 = batch.row(n).iter().map(|v| v * v).sum();
                    let zw: f64 = (0..z.cols()).map(|m| z[(n, m)] * w[(m, n)]).sum();
                    x2 - zw
                })
                .collect())
        }
    }
}

/// `Σ_n nᵀn ≥ 0` under the given mode.
pub fn residual_energy_sum(u: &ProjectionMatrix, batch: &Mat, mode: NoiseMode) -> Result<f64> {
    check_batch(u, batch)?;
    Ok(residual_energies(u, batch, mode)?.iter().sum())
}

/// `L2(U,σ)` over the batch.
pub fn l2_value(u: &ProjectionMatrix, sigma2: f64, batch: &Mat, mode: NoiseMode) -> Result<f64> {
    check_batch(u, batch)?;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(HopeError::InvalidArgument(format!("sigma2 = {sigma2} must be > 0")));
    }
    let s = residual_energy_sum(u, batch, mode)?;
    let n = batch.rows() as f64;
    let coeff = match mode {
        NoiseMode::Orthonormal => n * (u.input_dim() - u.latent_dim()) as f64 / 2.0,
        NoiseMode::FreeNorm => n / 2.0,
    };
    Ok(-coeff * sigma2.ln() - s / (2.0 * sigma2))
}

/// `∂L2/∂U` for the given mode.
pub fn l2_gradient_u(
    u: &ProjectionMatrix,
    sigma2: f64,
    batch: &Mat,
    mode: NoiseMode,
) -> Result<Mat> {
    check_batch(u, batch)?;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(HopeError::InvalidArgument(format!("sigma2 = {sigma2} must be > 0")));
    }
    let inv_s2 = 1.0 / sigma2;
    match mode {
        NoiseMode::Orthonormal => {
            let z = u.project_batch(batch); // XUᵀ, rows Ux_n
            let xt = z.matmul(u.mat()); // x̃ rows
            let mut xbar = batch.clone();
            for (b, t) in xbar.data_mut().iter_mut().zip(xt.data().iter()) {
                *b -= t;
            }
            // U Σ [x̄xᵀ + xx̄ᵀ] = (X̄Uᵀ)ᵀX + (XUᵀ)ᵀX̄
            let a = xbar.matmul_nt(u.mat()); // N×M
            let mut grad = a.matmul_tn(batch);
            let t2 = z.matmul_tn(&xbar);
            grad.scaled_add(1.0, &t2);
            grad.scale(inv_s2);
            Ok(grad)
        }
        NoiseMode::FreeNorm => {
            let z = u.project_batch(batch);
            let g = u.mat().matmul_nt(u.mat());
            let l = cholesky(&g).ok_or(HopeError::SingularProjection)?;
            let w = cholesky_solve_mat(&l, &z.transpose()).transpose(); // N×M rows G⁻¹z_n
            // r_n = x_n − Uᵀ w_n
            let mut r = batch.clone();
            let wt = w.matmul(u.mat()); // N×D
            for (rv, tv) in r.data_mut().iter_mut().zip(wt.data().iter()) {
                *rv -= tv;
            }
            let mut grad = w.matmul_tn(&r);
            grad.scale(inv_s2);
            Ok(grad)
        }
    }
}

/// Closed-form ML σ² for the batch, floored at [`SIGMA2_FLOOR`].
pub fn sigma2_update(u: &ProjectionMatrix, batch: &Mat, mode: NoiseMode) -> Result<f64> {
    check_batch(u, batch)?;
    let s = residual_energy_sum(u, batch, mode)?;
    let n = batch.rows() as f64;
    let denom = match mode {
        NoiseMode::Orthonormal => {
            if u.input_dim() == u.latent_dim() {
                return Ok(SIGMA2_FLOOR);
            }
            n * (u.input_dim() - u.latent_dim()) as f64
        }
        NoiseMode::FreeNorm => n,
    };
    Ok((s / denom).max(SIGMA2_FLOOR))
}

/// Jacobian term of the free-norm objective:
/// value `J(U) = −N Σ_i ln|u_i|`, gradient `−N (UUᵀ)⁻¹ U`.
pub fn jacobian_term(u: &ProjectionMatrix, n: usize) -> Result<(f64, Mat)> {
    let nf = n as f64;
    let mut value = 0.0;
    for i in 0..u.latent_dim() {
        let r = norm(u.mat().row(i));
        if !(r > f64::MIN_POSITIVE) || !r.is_finite() {
            return Err(HopeError::DegenerateRow { index: i, norm: r });
        }
        value -= nf * r.ln();
    }
    let g = u.mat().matmul_nt(u.mat());
    let l = cholesky(&g).ok_or(HopeError::SingularProjection)?;
    let mut grad = cholesky_solve_mat(&l, u.mat());
    grad.scale(-nf);
    Ok((value, grad))
}
