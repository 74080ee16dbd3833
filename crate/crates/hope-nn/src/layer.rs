//! Layers: the HOPE layer, its collapsed dense form, and the linear head.
//!
//! A HOPE layer scores an input `x` through `z = Ux` and per-component
//! log-likelihood contributions
//!
//! ```text
//! phi_k = b_k + z·mu_k        b_k = ln pi_k + ln C_M(|mu_k|)   (exact vMF bias)
//!                             b_k = free trainable scalar      (free bias)
//! ```
//!
//! and outputs the pruned activations `eta_k = max(0, phi_k - eps)`. With
//! latent normalization off this is algebraically a rectified dense layer
//! with weight rows `w_k = Uᵀmu_k` and biases `b_k - eps`; `collapse` makes
//! that layer explicit. The free bias subsumes the exact vMF form (any value
//! the exact bias can take is representable), so supervised stacks default
//! to it while density-motivated uses keep the exact form.

use hope_core::bessel::bessel_ratio;
use hope_core::mat::norm;
use hope_core::movmf::PROJECTION_FLOOR;
use hope_core::{HopeError, Mat, MovMf, ProjectionMatrix, Result};
use rand::Rng;

/// How a HOPE layer's per-component bias `b_k` is parameterized.
#[derive(Debug, Clone)]
pub enum HopeBias {
    /// `b_k = ln pi_k + ln C_M(|mu_k|)`; `pi` stays on the simplex and the
    /// normalizer term is differentiated exactly through `|mu_k|`.
    ExactVmf,
    /// `b_k` is an unconstrained trainable vector (one entry per component).
    Free(Vec<f64>),
}

/// Projection + mixture scoring layer with rectified pruning.
#[derive(Debug, Clone)]
pub struct HopeLayer {
    pub projection: ProjectionMatrix,
    pub model: MovMf,
    /// Pruning threshold eps in `eta = max(0, phi - eps)`.
    pub threshold: f64,
    /// Unit-normalize `z` before scoring. Training gradients support both
    /// settings; `collapse` requires it off.
    pub normalize_z: bool,
    pub bias: HopeBias,
}

/// Everything the backward pass needs from a HOPE layer's forward pass.
pub(crate) struct HopeCache {
    /// The latent batch actually scored (normalized rows iff `normalize_z`).
    pub z: Mat,
    /// Pre-normalization row lengths `|Ux|`; present iff `normalize_z`.
    pub z_norms: Option<Vec<f64>>,
}

impl HopeLayer {
    pub fn new(
        projection: ProjectionMatrix,
        model: MovMf,
        threshold: f64,
        normalize_z: bool,
        bias: HopeBias,
    ) -> Result<Self> {
        if projection.latent_dim() != model.latent_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "projection latent dim {} vs mixture latent dim {}",
                projection.latent_dim(),
                model.latent_dim()
            )));
        }
        if !threshold.is_finite() {
            return Err(HopeError::InvalidArgument(format!(
                "threshold must be finite, got {threshold}"
            )));
        }
        if let HopeBias::Free(b) = &bias {
            if b.len() != model.k() {
                return Err(HopeError::DimensionMismatch(format!(
                    "free bias has {} entries for {} components",
                    b.len(),
                    model.k()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(HopeError::InvalidArgument("free bias must be finite".into()));
            }
        }
        Ok(HopeLayer { projection, model, threshold, normalize_z, bias })
    }

    /// Random layer for stacking: projection rows uniform then unit-normalized,
    /// mean directions uniform in `±gamma·sqrt(6/(K+M))`, threshold 0.
    pub fn random_init<R: Rng + ?Sized>(
        input_dim: usize,
        latent_dim: usize,
        components: usize,
        exact_bias: bool,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let projection = ProjectionMatrix::random_init(latent_dim, input_dim, rng)?;
        let bound = gamma * (6.0 / (components + latent_dim) as f64).sqrt();
        let mut dirs = Mat::zeros(components, latent_dim);
        for v in dirs.data_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        let model = MovMf::new(vec![1.0 / components as f64; components], dirs)?;
        let bias = if exact_bias {
            HopeBias::ExactVmf
        } else {
            HopeBias::Free(vec![0.0; components])
        };
        HopeLayer::new(projection, model, 0.0, false, bias)
    }

    pub fn input_dim(&self) -> usize {
        self.projection.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.projection.latent_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.model.k()
    }

    /// Per-component bias `b_k` as used in `phi_k = b_k + z·mu_k`.
    pub fn log_bias(&self) -> Result<Vec<f64>> {
        match &self.bias {
            HopeBias::Free(b) => Ok(b.clone()),
            HopeBias::ExactVmf => {
                let log_c = self.model.log_coefficients()?;
                let mut out = Vec::with_capacity(self.model.k());
                for (k, (&pi, lc)) in self.model.weights().iter().zip(log_c).enumerate() {
                    if pi <= 0.0 {
                        return Err(HopeError::InvalidArgument(format!(
                            "component {k} has weight {pi}; exact vMF bias needs pi > 0"
                        )));
                    }
                    out.push(pi.ln() + lc);
                }
                Ok(out)
            }
        }
    }

    /// Latent batch plus pre-activations `phi - eps` for a batch of inputs.
    pub(crate) fn forward_batch(&self, x: &Mat) -> Result<(HopeCache, Mat)> {
        if x.cols() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "input has {} columns, layer expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut z = x.matmul_nt(self.projection.mat());
        let z_norms = if self.normalize_z {
            let mut norms = Vec::with_capacity(z.rows());
            for i in 0..z.rows() {
                let r = norm(z.row(i));
                if r < PROJECTION_FLOOR {
                    return Err(HopeError::DegenerateProjection { index: i, norm: r });
                }
                for v in z.row_mut(i) {
                    *v /= r;
                }
                norms.push(r);
            }
            Some(norms)
        } else {
            None
        };
        let bias = self.log_bias()?;
        let mut pre = z.matmul_nt(self.model.mean_dirs());
        for i in 0..pre.rows() {
            let row = pre.row_mut(i);
            for (p, b) in row.iter_mut().zip(&bias) {
                *p += b - self.threshold;
            }
        }
        Ok((HopeCache { z, z_norms }, pre))
    }

    /// Pruned activations `eta = max(0, phi - eps)` for one input.
    pub fn hope_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Mat::from_vec(1, x.len(), x.to_vec());
        let (_, pre) = self.forward_batch(&batch)?;
        Ok(pre.row(0).iter().map(|&p| p.max(0.0)).collect())
    }

    /// Merge projection and mixture into one rectified dense layer:
    /// `w_k = Uᵀmu_k`, dense bias `b_k - eps`. Exact only without latent
    /// normalization, hence the precondition.
    pub fn collapse(&self) -> Result<DenseLayer> {
        if self.normalize_z {
            return Err(HopeError::InvalidArgument(
                "collapse requires normalize_z off; the normalized form is not affine".into(),
            ));
        }
        let weights = self.model.mean_dirs().matmul(self.projection.mat());
        let bias: Vec<f64> =
            self.log_bias()?.into_iter().map(|b| b - self.threshold).collect();
        DenseLayer::new(weights, bias)
    }

    /// `-A(kappa_k)/kappa_k` factors for the exact-bias normalizer gradient,
    /// where `A = I_{M/2}/I_{M/2-1}`. Only meaningful in exact-bias mode.
    pub(crate) fn log_c_gradient_factors(&self) -> Result<Vec<f64>> {
        let half_m = self.latent_dim() as f64 / 2.0;
        self.model
            .kappas()
            .iter()
            .map(|&kappa| bessel_ratio(half_m, kappa).map(|a| -a / kappa))
            .collect()
    }
}

/// Fully connected rectified layer: `y = max(0, Wx + b)`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// K×D weight matrix, one output unit per row.
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Mat, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(HopeError::DimensionMismatch(format!(
                "{} weight rows vs {} bias entries",
                weights.rows(),
                bias.len()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(HopeError::InvalidArgument("dense layer entries must be finite".into()));
        }
        Ok(DenseLayer { weights, bias })
    }

    /// Uniform init in `±gamma·sqrt(6/(fan_in + fan_out))`, zero bias.
    pub fn random_init<R: Rng + ?Sized>(
        output_dim: usize,
        input_dim: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = gamma * (6.0 / (output_dim + input_dim) as f64).sqrt();
        let mut weights = Mat::zeros(output_dim, input_dim);
        for v in weights.data_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        DenseLayer::new(weights, vec![0.0; output_dim])
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Pre-activations `Wx + b` for a batch (rectification is the caller's).
    pub(crate) fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "input has {} columns, layer expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut pre = x.matmul_nt(&self.weights);
        for i in 0..pre.rows() {
            for (p, b) in pre.row_mut(i).iter_mut().zip(&self.bias) {
                *p += b;
            }
        }
        Ok(pre)
    }

    /// Rectified forward for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pre = self.forward_batch(&Mat::from_vec(1, x.len(), x.to_vec()))?;
        Ok(pre.row(0).iter().map(|&p| p.max(0.0)).collect())
    }
}

/// Linear classification head: `logits = Wh + b`, softmax applied by the loss.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// C×H weight matrix.
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    pub fn new(weights: Mat, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(HopeError::DimensionMismatch(format!(
                "{} weight rows vs {} bias entries",
                weights.rows(),
                bias.len()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|v| !v.is_finite()) {
            return Err(HopeError::InvalidArgument("linear layer entries must be finite".into()));
        }
        Ok(LinearLayer { weights, bias })
    }

    pub fn random_init<R: Rng + ?Sized>(
        output_dim: usize,
        input_dim: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = gamma * (6.0 / (output_dim + input_dim) as f64).sqrt();
        let mut weights = Mat::zeros(output_dim, input_dim);
        for v in weights.data_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        LinearLayer::new(weights, vec![0.0; output_dim])
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub(crate) fn forward_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "input has {} columns, classifier expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut out = x.matmul_nt(&self.weights);
        for i in 0..out.rows() {
            for (p, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *p += b;
            }
        }
        Ok(out)
    }
}
