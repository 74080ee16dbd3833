//! The combined model: projection `U`, a mixture density on the latent
//! space, and the residual noise model.
//!
//! The training objective for a batch of `N` samples is
//!
//! ```text
//! F(U, Θ, σ) = (L1(U, Θ) + L2(U, σ)) / N − β D(U)        (orthonormal)
//! F(U, Θ, σ) = (L1 + L2 + J(U)) / N − β D(U)             (free-norm)
//! ```
//!
//! maximized by stochastic gradient ascent. `L1` is the mixture
//! log-likelihood of the projected batch, `L2` the residual Gaussian
//! likelihood, `D` the row-correlation penalty, and `J` the free-norm
//! Jacobian correction. The likelihood terms are averaged per sample so
//! that step sizes and the penalty weight are independent of the
//! minibatch size.

use crate::gmm::{DiagonalGmm, GmmGradients};
use crate::mat::Mat;
use crate::movmf::{MovMf, MovMfGradients};
use crate::noise::{self, NoiseMode, NoiseModel};
use crate::projection::ProjectionMatrix;
use crate::{HopeError, Result};

#[derive(Debug, Clone)]
pub enum MixtureModel {
    Gmm(DiagonalGmm),
    /// von Mises-Fisher mixture; `normalize_z` selects whether latent
    /// vectors are scaled to the unit sphere before scoring.
    MovMf { model: MovMf, normalize_z: bool },
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        match self {
            MixtureModel::Gmm(m) => m.k(),
            MixtureModel::MovMf { model, .. } => model.k(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            MixtureModel::Gmm(m) => m.latent_dim(),
            MixtureModel::MovMf { model, .. } => model.latent_dim(),
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            MixtureModel::Gmm(m) => m.weights(),
            MixtureModel::MovMf { model, .. } => model.weights(),
        }
    }
}

/// Gradients of the full objective for one batch, grouped by parameter.
#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub d_u: Mat,
    pub d_pi: Vec<f64>,
    /// GMM: component means; movMF: unnormalized mean directions.
    pub d_mu: Mat,
    /// GMM only: diagonal variances. Empty (0×0) for movMF.
    pub d_var: Mat,
}

#[derive(Debug, Clone)]
pub struct HopeModel {
    pub projection: ProjectionMatrix,
    pub mixture: MixtureModel,
    pub noise: NoiseModel,
}

impl HopeModel {
    pub fn new(projection: ProjectionMatrix, mixture: MixtureModel, noise: NoiseModel) -> Result<Self> {
        if mixture.latent_dim() != projection.latent_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "mixture latent dim {} vs projection latent dim {}",
                mixture.latent_dim(),
                projection.latent_dim()
            )));
        }
        Ok(HopeModel { projection, mixture, noise })
    }

    pub fn input_dim(&self) -> usize {
        self.projection.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.projection.latent_dim()
    }

    /// Mixture log-likelihood `L1` of the projected batch.
    pub fn l1_value(&self, batch: &Mat) -> Result<f64> {
        match &self.mixture {
            MixtureModel::Gmm(m) => m.log_likelihood(&self.projection, batch),
            MixtureModel::MovMf { model, normalize_z } => {
                model.log_likelihood(&self.projection, batch, *normalize_z)
            }
        }
    }

    /// Per-sample objective `(L1 + L2)/N − β D(U)` (plus `J(U)/N` in
    /// free-norm mode).
    pub fn objective(&self, batch: &Mat, penalty_weight: f64) -> Result<f64> {
        let l1 = self.l1_value(batch)?;
        let l2 = noise::l2_value(&self.projection, self.noise.sigma2, batch, self.noise.mode)?;
        let mut total = l1 + l2;
        if self.noise.mode == NoiseMode::FreeNorm {
            let (j, _) = noise::jacobian_term(&self.projection, batch.rows())?;
            total += j;
        }
        Ok(total / batch.rows() as f64 - penalty_weight * self.projection.penalty()?)
    }

    /// Analytic gradients of the full objective for one batch.
    pub fn gradients(&self, batch: &Mat, penalty_weight: f64) -> Result<ModelGradients> {
        let mut d_u;
        let d_pi;
        let d_mu;
        let mut d_var = Mat::zeros(0, 0);

        match &self.mixture {
            MixtureModel::Gmm(m) => {
                let GmmGradients { d_pi: gp, d_mu: gm, d_var: gv, d_u: gu } =
                    m.gradients(&self.projection, batch)?;
                d_u = gu;
                d_pi = gp;
                d_mu = gm;
                d_var = gv;
            }
            MixtureModel::MovMf { model, normalize_z } => {
                if !normalize_z {
                    return Err(HopeError::InvalidArgument(
                        "movMF training gradients require latent normalization".into(),
                    ));
                }
                let MovMfGradients { d_pi: gp, d_mu: gm, d_u: gu } =
                    model.gradients(&self.projection, batch)?;
                d_u = gu;
                d_pi = gp;
                d_mu = gm;
            }
        }

        let l2_grad =
            noise::l2_gradient_u(&self.projection, self.noise.sigma2, batch, self.noise.mode)?;
        d_u.scaled_add(1.0, &l2_grad);

        if self.noise.mode == NoiseMode::FreeNorm {
            let (_, jg) = noise::jacobian_term(&self.projection, batch.rows())?;
            d_u.scaled_add(1.0, &jg);
        }

        // per-sample scale for the likelihood terms; the penalty is not
        // a per-sample quantity and stays unscaled
        let inv_n = 1.0 / batch.rows() as f64;
        d_u.scale(inv_n);
        let d_pi: Vec<f64> = d_pi.iter().map(|g| g * inv_n).collect();
        let mut d_mu = d_mu;
        d_mu.scale(inv_n);
        d_var.scale(inv_n);

        if penalty_weight != 0.0 {
            let pg = self.projection.penalty_gradient()?;
            d_u.scaled_add(-penalty_weight, &pg);
        }

        Ok(ModelGradients { d_u, d_pi, d_mu, d_var })
    }
}
