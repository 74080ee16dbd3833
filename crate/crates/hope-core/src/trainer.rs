//! Minibatch stochastic gradient ascent for the full model.
//!
//! Each minibatch applies, in order: a momentum step on `U`, on the
//! mixture component parameters, and on the mixing weights, then the
//! closed-form σ² refresh, and finally the constraint projections
//! (weights clamped and renormalized to the simplex, rows of `U`
//! renormalized to unit length, or clamped to length ≥ 1 in free-norm
//! mode). Per-epoch schedules:
//!
//! ```text
//! ε(t) = ε₀ αᵗ
//! m(t) = (t/T) m_f + (1 − t/T) m_i   for t < T, else m_f
//! ```
//!
//! Runs are deterministic for a fixed seed: samples are shuffled with a
//! seeded ChaCha8 stream and all reductions are sequential, so repeated
//! runs produce bit-identical reports.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gmm::{VARIANCE_FLOOR, WEIGHT_FLOOR};
use crate::mat::Mat;
use crate::model::{HopeModel, MixtureModel, ModelGradients};
use crate::movmf::KAPPA_FLOOR;
use crate::noise::{self, NoiseMode, SIGMA2_FLOOR};
use crate::{HopeError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma2Mode {
    /// Refresh σ² in closed form after every minibatch.
    Learned,
    /// Hold σ² at the given value for the whole run.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Initial learning rate ε₀.
    pub lr0: f64,
    /// Per-epoch multiplicative decay α.
    pub lr_decay: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    /// Epochs T over which momentum ramps from initial to final.
    pub momentum_ramp: usize,
    /// Penalty coefficient β.
    pub penalty_weight: f64,
    pub sigma2_mode: Sigma2Mode,
    pub seed: u64,
    /// Demand a fixed reduction order. This implementation accumulates
    /// gradients sequentially in sample order, so the guarantee holds
    /// whether or not the flag is set; it exists so callers can state
    /// the requirement.
    pub deterministic_reduction: bool,
}

impl TrainConfig {
    pub fn unsupervised_defaults() -> Self {
        TrainConfig {
            epochs: 50,
            minibatch_size: 100,
            lr0: 0.002,
            deterministic_reduction: true,
            lr_decay: 0.998,
            momentum_initial: 0.5,
            momentum_final: 0.99,
            momentum_ramp: 50,
            penalty_weight: 1.0,
            sigma2_mode: Sigma2Mode::Fixed(0.1),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.minibatch_size == 0 {
            return Err(HopeError::InvalidArgument("minibatch_size must be >= 1".into()));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(HopeError::InvalidArgument(format!(
                "lr0 = {} must be positive",
                self.lr0
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(HopeError::InvalidArgument(format!(
                "lr_decay = {} must lie in (0, 1]",
                self.lr_decay
            )));
        }
        for (name, m) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                return Err(HopeError::InvalidArgument(format!("{name} = {m} must lie in [0, 1)")));
            }
        }
        if !(self.penalty_weight >= 0.0) || !self.penalty_weight.is_finite() {
            return Err(HopeError::InvalidArgument(format!(
                "penalty_weight = {} must be >= 0",
                self.penalty_weight
            )));
        }
        if let Sigma2Mode::Fixed(v) = self.sigma2_mode {
            if !(v > 0.0) || !v.is_finite() {
                return Err(HopeError::InvalidArgument(format!(
                    "fixed sigma2 = {v} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Learning rate at 0-based epoch `t`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch as i32)
    }

    /// Momentum at 0-based epoch `t`.
    pub fn momentum_at(&self, epoch: usize) -> f64 {
        if self.momentum_ramp == 0 || epoch >= self.momentum_ramp {
            return self.momentum_final;
        }
        let f = epoch as f64 / self.momentum_ramp as f64;
        f * self.momentum_final + (1.0 - f) * self.momentum_initial
    }
}

/// Extra knobs for [`train_unsupervised_with`].
pub struct TrainOptions<'a> {
    /// Leave `U` untouched (fixed-projection baselines).
    pub freeze_u: bool,
    /// Smooth the per-minibatch σ² refresh: σ² ← d·σ² + (1−d)·σ²_new.
    pub sigma2_ema_decay: Option<f64>,
    /// Called after every minibatch update, post constraint projection.
    pub observer: Option<&'a mut dyn FnMut(&HopeModel)>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        TrainOptions { freeze_u: false, sigma2_ema_decay: None, observer: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean per-sample objective, accumulated before each update.
    pub objective: f64,
    /// Row-correlation penalty D(U) at epoch end.
    pub penalty: f64,
    /// Σ_{i≠j} |cos(u_i, u_j)| at epoch end.
    pub correlation_sum: f64,
    /// σ² at epoch end.
    pub sigma2: f64,
    /// Wall-clock seconds (excluded from determinism comparisons).
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// One `key=value` line per epoch, preceded by a seed line. Floats
    /// are printed with their shortest round-trip representation, so two
    /// runs agree on these lines iff they agree bit for bit.
    pub fn record_lines(&self) -> Vec<String> {
        let mut lines = Vec::with_capacity(self.epochs.len() + 1);
        lines.push(format!("seed={} epochs={}", self.seed, self.epochs.len()));
        for e in &self.epochs {
            lines.push(format!(
                "epoch={} objective={:?} penalty={:?} correlation_sum={:?} sigma2={:?} seconds={:.3}",
                e.epoch, e.objective, e.penalty, e.correlation_sum, e.sigma2, e.seconds
            ));
        }
        lines
    }

    /// Bitwise equality of everything except wall-clock seconds.
    pub fn deterministic_eq(&self, other: &TrainReport) -> bool {
        self.seed == other.seed
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.objective.to_bits() == b.objective.to_bits()
                    && a.penalty.to_bits() == b.penalty.to_bits()
                    && a.correlation_sum.to_bits() == b.correlation_sum.to_bits()
                    && a.sigma2.to_bits() == b.sigma2.to_bits()
            })
    }
}

struct Velocities {
    u: Mat,
    pi: Vec<f64>,
    mu: Mat,
    /// GMM only, in log-variance coordinates.
    log_var: Mat,
}

fn check_grads_finite(g: &ModelGradients, epoch: usize, minibatch: usize) -> Result<()> {
    let ok = g.d_u.is_finite()
        && g.d_pi.iter().all(|v| v.is_finite())
        && g.d_mu.is_finite()
        && g.d_var.is_finite();
    if ok {
        Ok(())
    } else {
        Err(HopeError::NonFinite { quantity: "gradient", epoch, minibatch })
    }
}

fn gather_rows(data: &Mat, idx: &[usize]) -> Mat {
    let mut batch = Mat::zeros(idx.len(), data.cols());
    for (bi, &si) in idx.iter().enumerate() {
        batch.row_mut(bi).copy_from_slice(data.row(si));
    }
    batch
}

fn renormalize_weights(weights: &mut [f64]) {
    for w in weights.iter_mut() {
        *w = w.max(WEIGHT_FLOOR);
    }
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
}

pub fn train_unsupervised(
    model: &mut HopeModel,
    data: &Mat,
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_unsupervised_with(model, data, config, TrainOptions::default())
}

pub fn train_unsupervised_with(
    model: &mut HopeModel,
    data: &Mat,
    config: &TrainConfig,
    mut options: TrainOptions<'_>,
) -> Result<TrainReport> {
    config.validate()?;
    if data.rows() == 0 {
        return Err(HopeError::InvalidArgument("empty training set".into()));
    }
    if data.cols() != model.input_dim() {
        return Err(HopeError::DimensionMismatch(format!(
            "data dimension {} vs model input dim {}",
            data.cols(),
            model.input_dim()
        )));
    }
    if let Some(d) = options.sigma2_ema_decay {
        if !(0.0..1.0).contains(&d) {
            return Err(HopeError::InvalidArgument(format!(
                "sigma2_ema_decay = {d} must lie in [0, 1)"
            )));
        }
    }

    match config.sigma2_mode {
        Sigma2Mode::Fixed(v) => {
            model.noise.sigma2 = v.max(SIGMA2_FLOOR);
            model.noise.fixed = true;
        }
        Sigma2Mode::Learned => model.noise.fixed = false,
    }

    let k = model.mixture.k();
    let m = model.latent_dim();
    let d = model.input_dim();
    let mut vel = Velocities {
        u: Mat::zeros(m, d),
        pi: vec![0.0; k],
        mu: Mat::zeros(k, m),
        log_var: match &model.mixture {
            MixtureModel::Gmm(_) => Mat::zeros(k, m),
            MixtureModel::MovMf { .. } => Mat::zeros(0, 0),
        },
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..data.rows()).collect();
    let mut epoch_stats = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let start = Instant::now();
        indices.shuffle(&mut rng);
        let lr = config.lr_at(epoch);
        let mom = config.momentum_at(epoch);
        let mut objective_sum = 0.0;

        for (mb, chunk) in indices.chunks(config.minibatch_size).enumerate() {
            let batch = gather_rows(data, chunk);

            let obj = model.objective(&batch, config.penalty_weight)?;
            if !obj.is_finite() {
                return Err(HopeError::NonFinite { quantity: "objective", epoch, minibatch: mb });
            }
            objective_sum += obj * chunk.len() as f64;

            let grads = model.gradients(&batch, config.penalty_weight)?;
            check_grads_finite(&grads, epoch, mb)?;

            if !options.freeze_u {
                vel.u.scale(mom);
                vel.u.scaled_add(lr, &grads.d_u);
                let u = model.projection.mat_mut();
                for (p, v) in u.data_mut().iter_mut().zip(vel.u.data().iter()) {
                    *p += v;
                }
            }

            match &mut model.mixture {
                MixtureModel::Gmm(gmm) => {
                    let (weights, means, variances) = gmm.params_mut();

                    vel.mu.scale(mom);
                    vel.mu.scaled_add(lr, &grads.d_mu);
                    for (p, v) in means.data_mut().iter_mut().zip(vel.mu.data().iter()) {
                        *p += v;
                    }

                    // step variances in log coordinates: dλ = σ² dσ²
                    vel.log_var.scale(mom);
                    for (lv, (g, s2)) in vel
                        .log_var
                        .data_mut()
                        .iter_mut()
                        .zip(grads.d_var.data().iter().zip(variances.data().iter()))
                    {
                        *lv += lr * g * s2;
                    }
                    for (s2, v) in variances.data_mut().iter_mut().zip(vel.log_var.data().iter())
                    {
                        *s2 = (s2.ln() + v).exp().max(VARIANCE_FLOOR);
                    }

                    for ((w, v), g) in
                        weights.iter_mut().zip(vel.pi.iter_mut()).zip(grads.d_pi.iter())
                    {
                        *v = mom * *v + lr * g;
                        *w += *v;
                    }
                    renormalize_weights(weights);
                }
                MixtureModel::MovMf { model: vmf, .. } => {
                    let (weights, mean_dirs) = vmf.params_mut();

                    vel.mu.scale(mom);
                    vel.mu.scaled_add(lr, &grads.d_mu);
                    for (p, v) in mean_dirs.data_mut().iter_mut().zip(vel.mu.data().iter()) {
                        *p += v;
                    }
                    // κ = |μ_k| stays above its floor
                    for i in 0..mean_dirs.rows() {
                        let row = mean_dirs.row_mut(i);
                        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if n < KAPPA_FLOOR {
                            if n > f64::MIN_POSITIVE {
                                let s = KAPPA_FLOOR / n;
                                for v in row.iter_mut() {
                                    *v *= s;
                                }
                            } else {
                                row.fill(0.0);
                                row[0] = KAPPA_FLOOR;
                            }
                        }
                    }

                    for ((w, v), g) in
                        weights.iter_mut().zip(vel.pi.iter_mut()).zip(grads.d_pi.iter())
                    {
                        *v = mom * *v + lr * g;
                        *w += *v;
                    }
                    renormalize_weights(weights);
                }
            }

            if !model.noise.fixed {
                let fresh = noise::sigma2_update(&model.projection, &batch, model.noise.mode)?;
                model.noise.sigma2 = match options.sigma2_ema_decay {
                    Some(decay) => (decay * model.noise.sigma2 + (1.0 - decay) * fresh)
                        .max(SIGMA2_FLOOR),
                    None => fresh,
                };
            }

            if !options.freeze_u {
                match model.noise.mode {
                    NoiseMode::Orthonormal => model.projection.normalize_rows()?,
                    NoiseMode::FreeNorm => model.projection.clamp_row_norms_min(1.0)?,
                }
            }

            if !model.projection.mat().is_finite() {
                return Err(HopeError::NonFinite { quantity: "projection", epoch, minibatch: mb });
            }

            if let Some(observer) = options.observer.as_mut() {
                observer(model);
            }
        }

        epoch_stats.push(EpochStats {
            epoch: epoch + 1,
            objective: objective_sum / data.rows() as f64,
            penalty: model.projection.penalty()?,
            correlation_sum: model.projection.correlation_sum()?,
            sigma2: model.noise.sigma2,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainReport { seed: config.seed, epochs: epoch_stats })
}
