//! Core of the HOPE model: hybrid orthogonal projection and estimation.
//!
//! A `D`-dimensional observation is split by an `M×D` projection `U` into a
//! latent part `z = Ux`, modeled by a finite mixture (diagonal-covariance
//! Gaussian or von Mises-Fisher), and a residual `x̄ = (I − UᵀU)x`, modeled
//! as zero-mean isotropic Gaussian noise with variance σ². Learning
//! maximizes the joint log-likelihood `L1(U,Θ) + L2(U,σ)` by minibatch SGD
//! while an orthogonality penalty `D(U)` drives the rows of `U` toward an
//! orthonormal frame.

pub mod bessel;
pub mod gmm;
pub mod mat;
pub mod model;
pub mod movmf;
pub mod noise;
pub mod projection;
pub mod trainer;

pub use gmm::{DiagonalGmm, GmmGradients};
pub use mat::Mat;
pub use model::{HopeModel, MixtureModel};
pub use movmf::{MovMf, MovMfGradients};
pub use noise::{NoiseMode, NoiseModel};
pub use projection::ProjectionMatrix;
pub use trainer::{
    train_unsupervised, train_unsupervised_with, Sigma2Mode, TrainConfig, TrainOptions,
    TrainReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HopeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("row {index} is degenerate (norm {norm:e})")]
    DegenerateRow { index: usize, norm: f64 },

    #[error("projected sample {index} has near-zero length {norm:e}; cannot unit-normalize")]
    DegenerateProjection { index: usize, norm: f64 },

    #[error("UU^T is numerically singular")]
    SingularProjection,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite {quantity} at epoch {epoch}, minibatch {minibatch}; training aborted")]
    NonFinite {
        quantity: &'static str,
        epoch: usize,
        minibatch: usize,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, HopeError>;
