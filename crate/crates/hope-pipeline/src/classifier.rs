//! Multinomial logistic post-classifier for pooled features.
//!
//! Minibatch SGD with momentum, geometric learning-rate decay, and weight
//! decay on the weight matrix. Inputs are standardized per column using
//! statistics of the training set; the scaling is stored with the model so
//! prediction sees the same affine map.

use hope_core::mat::logsumexp;
use hope_core::{HopeError, Mat, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Columns with standard deviation below this keep scale 1 (they carry no
/// signal, and dividing by a vanishing std would explode them).
pub const SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr0: f64,
    /// Per-epoch multiplicative decay.
    pub lr_decay: f64,
    pub momentum: f64,
    /// L2 decay on the weight matrix only, not the bias.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 40,
            minibatch_size: 100,
            lr0: 0.02,
            lr_decay: 0.97,
            momentum: 0.9,
            weight_decay: 1e-5,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.minibatch_size == 0 {
            return Err(HopeError::InvalidArgument(
                "epochs and minibatch size must be positive".into(),
            ));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(HopeError::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr0
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(HopeError::InvalidArgument(format!(
                "learning-rate decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(HopeError::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(HopeError::InvalidArgument(format!(
                "weight decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Softmax classifier over standardized inputs.
#[derive(Debug, Clone)]
pub struct LinearClassifier {
    weights: Mat,
    bias: Vec<f64>,
    feat_mean: Vec<f64>,
    feat_scale: Vec<f64>,
}

impl LinearClassifier {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    fn standardized(&self, x: &Mat, rows: std::ops::Range<usize>) -> Mat {
        let mut out = Mat::zeros(rows.len(), x.cols());
        for (dst, src) in rows.enumerate() {
            for ((o, &v), (m, s)) in out
                .row_mut(dst)
                .iter_mut()
                .zip(x.row(src))
                .zip(self.feat_mean.iter().zip(self.feat_scale.iter()))
            {
                *o = (v - m) * s;
            }
        }
        out
    }

    pub fn logits_batch(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "features have dimension {}, classifier expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut out = Mat::zeros(x.rows(), self.classes());
        const CHUNK: usize = 1024;
        let mut start = 0;
        while start < x.rows() {
            let end = (start + CHUNK).min(x.rows());
            let std = self.standardized(x, start..end);
            let logits = std.matmul_nt(&self.weights);
            for i in 0..logits.rows() {
                for ((o, &l), b) in out
                    .row_mut(start + i)
                    .iter_mut()
                    .zip(logits.row(i))
                    .zip(self.bias.iter())
                {
                    *o = l + b;
                }
            }
            start = end;
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Mat) -> Result<Vec<usize>> {
        let logits = self.logits_batch(x)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    pub fn error_rate(&self, x: &Mat, labels: &[usize]) -> Result<f64> {
        check_labels(x.rows(), labels, self.classes())?;
        let pred = self.predict(x)?;
        let wrong = pred.iter().zip(labels.iter()).filter(|(p, y)| p != y).count();
        Ok(wrong as f64 / labels.len().max(1) as f64)
    }

    /// Mean negative log-likelihood of the true classes.
    pub fn ce(&self, x: &Mat, labels: &[usize]) -> Result<f64> {
        check_labels(x.rows(), labels, self.classes())?;
        let logits = self.logits_batch(x)?;
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = logits.row(i);
            total += logsumexp(row) - row[y];
        }
        Ok(total / labels.len().max(1) as f64)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_labels(rows: usize, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(HopeError::DimensionMismatch(format!(
            "{rows} samples but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(HopeError::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierEpoch {
    /// 1-based epoch number.
    pub epoch: usize,
    pub lr: f64,
    /// Mean training cross-entropy, accumulated before each update.
    pub ce: f64,
    /// Training error at epoch end.
    pub train_err: f64,
    /// Wall-clock seconds (excluded from determinism comparisons).
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    pub seed: u64,
    pub epochs: Vec<ClassifierEpoch>,
}

impl ClassifierReport {
    pub fn record_lines(&self) -> Vec<String> {
        let mut lines = Vec::with_capacity(self.epochs.len() + 1);
        lines.push(format!("seed={} epochs={}", self.seed, self.epochs.len()));
        for e in &self.epochs {
            lines.push(format!(
                "epoch={} lr={:?} ce={:?} train_err={:?} seconds={:.3}",
                e.epoch, e.lr, e.ce, e.train_err, e.seconds
            ));
        }
        lines
    }

    /// Bitwise equality of everything except wall-clock seconds.
    pub fn deterministic_eq(&self, other: &ClassifierReport) -> bool {
        self.seed == other.seed
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.lr.to_bits() == b.lr.to_bits()
                    && a.ce.to_bits() == b.ce.to_bits()
                    && a.train_err.to_bits() == b.train_err.to_bits()
            })
    }

    pub fn final_train_err(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_err)
    }
}

/// Trains a softmax classifier on `features` (rows are samples).
pub fn train_linear_classifier(
    features: &Mat,
    labels: &[usize],
    classes: usize,
    config: &ClassifierConfig,
) -> Result<(LinearClassifier, ClassifierReport)> {
    config.validate()?;
    if classes < 2 {
        return Err(HopeError::InvalidArgument(format!(
            "need at least two classes, got {classes}"
        )));
    }
    let n = features.rows();
    if n == 0 {
        return Err(HopeError::InvalidArgument("empty training set".into()));
    }
    check_labels(n, labels, classes)?;
    if !features.is_finite() {
        return Err(HopeError::Numeric("non-finite feature".into()));
    }

    let f = features.cols();
    let mut feat_mean = vec![0.0; f];
    for i in 0..n {
        for (m, &v) in feat_mean.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    for m in feat_mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; f];
    for i in 0..n {
        for ((s, &v), m) in var.iter_mut().zip(features.row(i)).zip(feat_mean.iter()) {
            let d = v - m;
            *s += d * d;
        }
    }
    let feat_scale: Vec<f64> = var
        .iter()
        .map(|s| {
            let std = (s / n as f64).sqrt();
            if std < SCALE_FLOOR {
                1.0
            } else {
                1.0 / std
            }
        })
        .collect();

    let mut clf = LinearClassifier {
        weights: Mat::zeros(classes, f),
        bias: vec![0.0; classes],
        feat_mean,
        feat_scale,
    };
    let mut vel_w = Mat::zeros(classes, f);
    let mut vel_b = vec![0.0; classes];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let start = Instant::now();
        let lr = config.lr0 * config.lr_decay.powi(epoch as i32);
        indices.shuffle(&mut rng);
        let mut ce_sum = 0.0;

        for chunk in indices.chunks(config.minibatch_size) {
            let mut batch = Mat::zeros(chunk.len(), f);
            for (bi, &si) in chunk.iter().enumerate() {
                for ((o, &v), (m, s)) in batch
                    .row_mut(bi)
                    .iter_mut()
                    .zip(features.row(si))
                    .zip(clf.feat_mean.iter().zip(clf.feat_scale.iter()))
                {
                    *o = (v - m) * s;
                }
            }

            let mut g = batch.matmul_nt(&clf.weights);
            let inv = 1.0 / chunk.len() as f64;
            for (bi, &si) in chunk.iter().enumerate() {
                let row = g.row_mut(bi);
                for (l, b) in row.iter_mut().zip(clf.bias.iter()) {
                    *l += b;
                }
                let lse = logsumexp(row);
                ce_sum += lse - row[labels[si]];
                for v in row.iter_mut() {
                    *v = (*v - lse).exp() * inv;
                }
                row[labels[si]] -= inv;
            }

            if !g.is_finite() {
                return Err(HopeError::NonFinite {
                    quantity: "gradient",
                    epoch: epoch + 1,
                    minibatch: 0,
                });
            }

            let d_w = g.matmul_tn(&batch);
            vel_w.scale(config.momentum);
            vel_w.scaled_add(-lr * config.weight_decay, &clf.weights);
            vel_w.scaled_add(-lr, &d_w);
            for (p, v) in clf.weights.data_mut().iter_mut().zip(vel_w.data()) {
                *p += v;
            }
            for (c, (vb, b)) in vel_b.iter_mut().zip(clf.bias.iter_mut()).enumerate() {
                let db: f64 = (0..g.rows()).map(|i| g.row(i)[c]).sum();
                *vb = config.momentum * *vb - lr * db;
                *b += *vb;
            }
        }

        let train_err = clf.error_rate(features, labels)?;
        epochs.push(ClassifierEpoch {
            epoch: epoch + 1,
            lr,
            ce: ce_sum / n as f64,
            train_err,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    Ok((clf, ClassifierReport { seed: config.seed, epochs }))
}
