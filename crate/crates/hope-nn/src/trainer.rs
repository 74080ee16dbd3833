//! Supervised minibatch SGD for HOPE/dense networks.
//!
//! Each epoch shuffles the training set with the run's seeded generator and
//! walks it in minibatches. Per minibatch: descent gradients of
//! `ce + beta * sum_l D(U_l)` from `ce_with_gradients`, momentum updates of
//! every parameter group with one shared learning rate, then the constraint
//! sweep: projection rows renormalized to unit length, and in exact-bias
//! layers the mixture weights clamped back onto the simplex and the
//! concentrations kept above their floor. Weight decay applies to dense and
//! classifier weight matrices only; decaying projections would fight the
//! unit-norm constraint, and mixture parameters carry their own constraints.
//!
//! The epoch learning rate follows `lr0 * decay^t` unless the dev-driven
//! schedule is enabled: then the rate holds at `lr0` while dev error still
//! improves, halves after every epoch once it stops, and training ends early
//! when the dev improvement stays below 0.1 percentage points twice in a
//! row. Momentum ramps linearly between its endpoints either way.
//!
//! All reductions are sequential, so two runs with the same seed produce
//! bit-identical reports and parameters.

use crate::layer::HopeBias;
use crate::network::{ce_with_gradients, Layer, LayerGrads, Network};
use hope_core::gmm::WEIGHT_FLOOR;
use hope_core::movmf::KAPPA_FLOOR;
use hope_core::trainer::{Sigma2Mode, TrainConfig};
use hope_core::{HopeError, Mat, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Decay applied to dense and classifier weight matrices each step.
pub const DENSE_WEIGHT_DECAY: f64 = 1e-5;

/// Stop the dev-driven schedule after this absolute improvement stalls twice.
const DEV_STOP_IMPROVEMENT: f64 = 1e-3;

/// Training hyperparameters for supervised nets. The noise-variance mode in
/// the shared config has no meaning here and is ignored.
pub fn supervised_defaults() -> TrainConfig {
    TrainConfig {
        epochs: 50,
        minibatch_size: 100,
        lr0: 0.004,
        lr_decay: 0.998,
        momentum_initial: 0.5,
        momentum_final: 0.99,
        momentum_ramp: 50,
        penalty_weight: 0.01,
        sigma2_mode: Sigma2Mode::Fixed(0.1),
        seed: 0,
        deterministic_reduction: true,
    }
}

/// Knobs beyond the shared schedule config.
pub struct SupervisedOptions<'a> {
    /// L2 decay on dense and classifier weights (never projections).
    pub weight_decay: f64,
    /// Hold the rate while dev error improves, then halve each epoch and
    /// stop once improvement stalls; replaces the geometric decay.
    pub dev_halving: bool,
    /// Called after each minibatch's constraint sweep.
    pub observer: Option<&'a mut dyn FnMut(&Network)>,
}

impl Default for SupervisedOptions<'_> {
    fn default() -> Self {
        SupervisedOptions {
            weight_decay: DENSE_WEIGHT_DECAY,
            dev_halving: false,
            observer: None,
        }
    }
}

/// One epoch of the supervised report.
#[derive(Debug, Clone)]
pub struct SupervisedEpoch {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Learning rate used for this epoch's steps.
    pub lr: f64,
    /// Mean cross-entropy over the epoch's minibatches (pre-update values).
    pub ce: f64,
    pub train_err: f64,
    pub dev_err: f64,
    /// Total row-correlation sum over all HOPE layers after the epoch.
    pub correlation_sum: f64,
    pub seconds: f64,
}

/// Per-epoch records of a supervised run.
#[derive(Debug, Clone)]
pub struct SupervisedReport {
    pub seed: u64,
    pub epochs: Vec<SupervisedEpoch>,
}

impl SupervisedReport {
    /// Line-delimited records, one per epoch plus a header.
    pub fn record_lines(&self) -> Vec<String> {
        let mut out = vec![format!("seed={} epochs={}", self.seed, self.epochs.len())];
        for e in &self.epochs {
            out.push(format!(
                "epoch={} lr={:?} ce={:?} train_err={:?} dev_err={:?} \
                 correlation_sum={:?} seconds={:.3}",
                e.epoch, e.lr, e.ce, e.train_err, e.dev_err, e.correlation_sum, e.seconds
            ));
        }
        out
    }

    /// Bitwise equality of everything except wall-clock seconds.
    pub fn deterministic_eq(&self, other: &SupervisedReport) -> bool {
        self.seed == other.seed
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.lr.to_bits() == b.lr.to_bits()
                    && a.ce.to_bits() == b.ce.to_bits()
                    && a.train_err.to_bits() == b.train_err.to_bits()
                    && a.dev_err.to_bits() == b.dev_err.to_bits()
                    && a.correlation_sum.to_bits() == b.correlation_sum.to_bits()
            })
    }

    /// Dev error of the last recorded epoch.
    pub fn final_dev_err(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.dev_err)
    }
}

enum LayerVel {
    Hope { u: Mat, mu: Mat, bias: Vec<f64> },
    Dense { w: Mat, b: Vec<f64> },
}

struct Velocities {
    layers: Vec<LayerVel>,
    cw: Mat,
    cb: Vec<f64>,
}

impl Velocities {
    fn zeros_like(net: &Network) -> Velocities {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Hope(h) => LayerVel::Hope {
                    u: Mat::zeros(h.latent_dim(), h.input_dim()),
                    mu: Mat::zeros(h.output_dim(), h.latent_dim()),
                    bias: vec![0.0; h.output_dim()],
                },
                Layer::Dense(d) => LayerVel::Dense {
                    w: Mat::zeros(d.output_dim(), d.input_dim()),
                    b: vec![0.0; d.output_dim()],
                },
            })
            .collect();
        Velocities {
            layers,
            cw: Mat::zeros(net.classifier.output_dim(), net.classifier.input_dim()),
            cb: vec![0.0; net.classifier.output_dim()],
        }
    }
}

/// `vel = mom*vel - lr*(grad + decay*param); param += vel` elementwise.
fn step_mat(param: &mut Mat, vel: &mut Mat, grad: &Mat, lr: f64, mom: f64, decay: f64) {
    for ((p, v), &g) in
        param.data_mut().iter_mut().zip(vel.data_mut().iter_mut()).zip(grad.data())
    {
        *v = mom * *v - lr * (g + decay * *p);
        *p += *v;
    }
}

fn step_vec(param: &mut [f64], vel: &mut [f64], grad: &[f64], lr: f64, mom: f64) {
    for ((p, v), &g) in param.iter_mut().zip(vel.iter_mut()).zip(grad) {
        *v = mom * *v - lr * g;
        *p += *v;
    }
}

fn clamp_simplex(weights: &mut [f64]) {
    for w in weights.iter_mut() {
        *w = w.max(WEIGHT_FLOOR);
    }
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
}

/// κ = |mu_k| stays above its floor; a fully collapsed row restarts on the
/// first axis so the direction is deterministic.
fn reclamp_kappas(dirs: &mut Mat) {
    for i in 0..dirs.rows() {
        let row = dirs.row_mut(i);
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
}

fn gather_rows(data: &Mat, idx: &[usize]) -> Mat {
    let mut out = Mat::zeros(idx.len(), data.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(data.row(i));
    }
    out
}

/// Train `net` in place; returns the per-epoch report.
///
/// `train`/`dev` are row batches with one label per row. The dev set steers
/// the halving schedule when enabled and is otherwise only evaluated.
pub fn train_supervised(
    net: &mut Network,
    train_x: &Mat,
    train_y: &[usize],
    dev_x: &Mat,
    dev_y: &[usize],
    config: &TrainConfig,
    mut options: SupervisedOptions<'_>,
) -> Result<SupervisedReport> {
    config.validate()?;
    if !(options.weight_decay >= 0.0) || !options.weight_decay.is_finite() {
        return Err(HopeError::InvalidArgument(format!(
            "weight decay must be finite and nonnegative, got {}",
            options.weight_decay
        )));
    }
    if train_x.rows() == 0 {
        return Err(HopeError::InvalidArgument("training set is empty".into()));
    }
    if dev_x.rows() == 0 {
        return Err(HopeError::InvalidArgument("dev set is empty".into()));
    }
    if train_x.cols() != net.input_dim() || dev_x.cols() != net.input_dim() {
        return Err(HopeError::DimensionMismatch(format!(
            "network expects {} inputs, got train {} / dev {}",
            net.input_dim(),
            train_x.cols(),
            dev_x.cols()
        )));
    }
    if train_y.len() != train_x.rows() || dev_y.len() != dev_x.rows() {
        return Err(HopeError::DimensionMismatch(
            "label counts must match row counts".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vel = Velocities::zeros_like(net);
    let mut report = SupervisedReport { seed: config.seed, epochs: Vec::new() };
    let n = train_x.rows();
    let mut order: Vec<usize> = (0..n).collect();

    // Dev-driven schedule state.
    let mut dev_lr = config.lr0;
    let mut halving = false;
    let mut best_dev = f64::INFINITY;
    let mut prev_dev: Option<f64> = None;
    let mut stalled = 0usize;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = if options.dev_halving { dev_lr } else { config.lr_at(epoch) };
        let mom = config.momentum_at(epoch);
        order.shuffle(&mut rng);

        let mut ce_sum = 0.0;
        for (mb, chunk) in order.chunks(config.minibatch_size).enumerate() {
            let bx = gather_rows(train_x, chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let (ce, grads) = ce_with_gradients(net, &bx, &by, config.penalty_weight)?;
            if !ce.is_finite() {
                return Err(HopeError::NonFinite {
                    quantity: "objective",
                    epoch: epoch + 1,
                    minibatch: mb + 1,
                });
            }
            if !grads.is_finite() {
                return Err(HopeError::NonFinite {
                    quantity: "gradient",
                    epoch: epoch + 1,
                    minibatch: mb + 1,
                });
            }
            ce_sum += ce * chunk.len() as f64;

            for ((layer, lvel), lgrad) in
                net.layers.iter_mut().zip(vel.layers.iter_mut()).zip(&grads.layers)
            {
                match (layer, lvel, lgrad) {
                    (
                        Layer::Hope(h),
                        LayerVel::Hope { u, mu, bias },
                        LayerGrads::Hope { d_u, d_mu, d_bias },
                    ) => {
                        step_mat(h.projection.mat_mut(), u, d_u, lr, mom, 0.0);
                        match &mut h.bias {
                            HopeBias::ExactVmf => {
                                let (weights, dirs) = h.model.params_mut();
                                step_mat(dirs, mu, d_mu, lr, mom, 0.0);
                                reclamp_kappas(dirs);
                                step_vec(weights, bias, d_bias, lr, mom);
                                clamp_simplex(weights);
                            }
                            HopeBias::Free(b) => {
                                let (_, dirs) = h.model.params_mut();
                                step_mat(dirs, mu, d_mu, lr, mom, 0.0);
                                step_vec(b, bias, d_bias, lr, mom);
                            }
                        }
                        h.projection.normalize_rows()?;
                    }
                    (
                        Layer::Dense(d),
                        LayerVel::Dense { w, b },
                        LayerGrads::Dense { d_w, d_b },
                    ) => {
                        step_mat(&mut d.weights, w, d_w, lr, mom, options.weight_decay);
                        step_vec(&mut d.bias, b, d_b, lr, mom);
                    }
                    _ => unreachable!("gradient layout matches network layout"),
                }
            }
            step_mat(
                &mut net.classifier.weights,
                &mut vel.cw,
                &grads.d_classifier_w,
                lr,
                mom,
                options.weight_decay,
            );
            step_vec(&mut net.classifier.bias, &mut vel.cb, &grads.d_classifier_b, lr, mom);

            if let Some(obs) = options.observer.as_mut() {
                obs(net);
            }
        }

        let train_err = net.error_rate(train_x, train_y)?;
        let dev_err = net.error_rate(dev_x, dev_y)?;
        report.epochs.push(SupervisedEpoch {
            epoch: epoch + 1,
            lr,
            ce: ce_sum / n as f64,
            train_err,
            dev_err,
            correlation_sum: net.correlation_sum()?,
            seconds: started.elapsed().as_secs_f64(),
        });

        if options.dev_halving {
            if dev_err >= best_dev {
                halving = true;
            }
            best_dev = best_dev.min(dev_err);
            if let Some(p) = prev_dev {
                if p - dev_err < DEV_STOP_IMPROVEMENT {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
            }
            prev_dev = Some(dev_err);
            if stalled >= 2 {
                break;
            }
            if halving {
                dev_lr *= 0.5;
            }
        }
    }
    Ok(report)
}
