//! Networks of HOPE and dense layers with a softmax head, their
//! cross-entropy objective and backward pass, and architecture strings.
//!
//! Architecture grammar: plain dims separated by `-`, a HOPE layer written
//! as a bracketed pair `[M-K]` (latent dim, components), final token is the
//! class count. `"784-[400-1200]-1200-10"` is a HOPE layer, a dense layer,
//! and a 10-way softmax head.
//!
//! The training loss is `ce_objective + beta * sum_l D(U_l)`: mean negative
//! log-likelihood of the labels plus the row-correlation penalty of every
//! projection matrix. `ce_backprop` returns descent gradients of that total;
//! with `beta = 0` the penalty branch is skipped entirely, so the returned
//! values are bitwise the plain cross-entropy gradients.

use crate::layer::{DenseLayer, HopeBias, HopeCache, HopeLayer, LinearLayer};
use hope_core::mat::{dot, logsumexp};
use hope_core::{HopeError, Mat, Result};
use rand::Rng;
use std::fmt;

/// One hidden layer of a network.
#[derive(Debug, Clone)]
pub enum Layer {
    Hope(HopeLayer),
    Dense(DenseLayer),
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        match self {
            Layer::Hope(l) => l.input_dim(),
            Layer::Dense(l) => l.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Layer::Hope(l) => l.output_dim(),
            Layer::Dense(l) => l.output_dim(),
        }
    }
}

/// Ordered hidden layers plus a C-way linear head (softmax in the loss).
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub classifier: LinearLayer,
}

/// Per-layer forward state kept for the backward pass.
pub(crate) struct LayerState {
    /// Pre-activations `phi - eps` or `Wx + b`; the rectifier gate.
    pub pre: Mat,
    /// Rectified output feeding the next layer.
    pub out: Mat,
    /// HOPE-only latent cache.
    pub hope: Option<HopeCache>,
}

pub(crate) struct ForwardPass {
    pub states: Vec<LayerState>,
    pub logits: Mat,
}

impl Network {
    pub fn new(layers: Vec<Layer>, classifier: LinearLayer) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(HopeError::DimensionMismatch(format!(
                    "layer {} produces {} features but layer {} expects {}",
                    i,
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        if let Some(last) = layers.last() {
            if last.output_dim() != classifier.input_dim() {
                return Err(HopeError::DimensionMismatch(format!(
                    "last layer produces {} features but the classifier expects {}",
                    last.output_dim(),
                    classifier.input_dim()
                )));
            }
        }
        Ok(Network { layers, classifier })
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map(Layer::input_dim)
            .unwrap_or_else(|| self.classifier.input_dim())
    }

    pub fn classes(&self) -> usize {
        self.classifier.output_dim()
    }

    /// Sum of orthogonality penalties `D(U)` over all HOPE layers.
    pub fn penalty_sum(&self) -> Result<f64> {
        let mut total = 0.0;
        for layer in &self.layers {
            if let Layer::Hope(h) = layer {
                total += h.projection.penalty()?;
            }
        }
        Ok(total)
    }

    /// Sum of row-correlation sums over all HOPE layers.
    pub fn correlation_sum(&self) -> Result<f64> {
        let mut total = 0.0;
        for layer in &self.layers {
            if let Layer::Hope(h) = layer {
                total += h.projection.correlation_sum()?;
            }
        }
        Ok(total)
    }

    pub(crate) fn forward(&self, batch: &Mat) -> Result<ForwardPass> {
        let mut states = Vec::with_capacity(self.layers.len());
        let mut cur = batch;
        for layer in &self.layers {
            let (hope, pre) = match layer {
                Layer::Hope(h) => {
                    let (cache, pre) = h.forward_batch(cur)?;
                    (Some(cache), pre)
                }
                Layer::Dense(d) => (None, d.forward_batch(cur)?),
            };
            let mut out = pre.clone();
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            states.push(LayerState { pre, out, hope });
            cur = &states.last().unwrap().out;
        }
        let logits = self.classifier.forward_batch(cur)?;
        Ok(ForwardPass { states, logits })
    }

    /// Class scores for a batch; rows align with input rows.
    pub fn logits(&self, batch: &Mat) -> Result<Mat> {
        Ok(self.forward(batch)?.logits)
    }

    /// Argmax class per row, evaluated in fixed-size chunks.
    pub fn predict(&self, batch: &Mat) -> Result<Vec<usize>> {
        const CHUNK: usize = 1024;
        let mut out = Vec::with_capacity(batch.rows());
        let mut start = 0;
        while start < batch.rows() {
            let stop = (start + CHUNK).min(batch.rows());
            let mut chunk = Mat::zeros(stop - start, batch.cols());
            for (dst, src) in (start..stop).enumerate() {
                chunk.row_mut(dst).copy_from_slice(batch.row(src));
            }
            let logits = self.logits(&chunk)?;
            for i in 0..logits.rows() {
                let row = logits.row(i);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                out.push(best);
            }
            start = stop;
        }
        Ok(out)
    }

    /// Smallest |pre-activation| across all hidden layers for this batch:
    /// how far the batch sits from the rectifier kinks. Useful when
    /// verifying gradients by finite differences, which need a margin.
    pub fn rectifier_margin(&self, batch: &Mat) -> Result<f64> {
        let pass = self.forward(batch)?;
        let mut margin = f64::INFINITY;
        for state in &pass.states {
            for &v in state.pre.data() {
                margin = margin.min(v.abs());
            }
        }
        Ok(margin)
    }

    /// Fraction of rows whose argmax class differs from the label.
    pub fn error_rate(&self, batch: &Mat, labels: &[usize]) -> Result<f64> {
        check_labels(batch, labels, self.classes())?;
        if batch.rows() == 0 {
            return Err(HopeError::InvalidArgument("error rate over an empty set".into()));
        }
        let pred = self.predict(batch)?;
        let wrong = pred.iter().zip(labels).filter(|(p, y)| p != y).count();
        Ok(wrong as f64 / batch.rows() as f64)
    }
}

fn check_labels(batch: &Mat, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != batch.rows() {
        return Err(HopeError::DimensionMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            batch.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(HopeError::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of the labels under the softmax head.
pub fn ce_objective(net: &Network, batch: &Mat, labels: &[usize]) -> Result<f64> {
    check_labels(batch, labels, net.classes())?;
    if batch.rows() == 0 {
        return Err(HopeError::InvalidArgument("objective over an empty batch".into()));
    }
    let logits = net.logits(batch)?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        total += logsumexp(row) - row[y];
    }
    Ok(total / batch.rows() as f64)
}

/// Gradients for every trainable group in the network.
#[derive(Debug, Clone)]
pub enum LayerGrads {
    Hope {
        d_u: Mat,
        d_mu: Mat,
        /// Free-bias gradient, or the mixture-weight gradient projected onto
        /// the simplex tangent (zero-sum) in exact-bias mode.
        d_bias: Vec<f64>,
    },
    Dense {
        d_w: Mat,
        d_b: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct NetGradients {
    /// One entry per hidden layer, in network order.
    pub layers: Vec<LayerGrads>,
    pub d_classifier_w: Mat,
    pub d_classifier_b: Vec<f64>,
}

impl NetGradients {
    pub fn is_finite(&self) -> bool {
        let head = self.d_classifier_w.is_finite()
            && self.d_classifier_b.iter().all(|v| v.is_finite());
        head && self.layers.iter().all(|g| match g {
            LayerGrads::Hope { d_u, d_mu, d_bias } => {
                d_u.is_finite() && d_mu.is_finite() && d_bias.iter().all(|v| v.is_finite())
            }
            LayerGrads::Dense { d_w, d_b } => {
                d_w.is_finite() && d_b.iter().all(|v| v.is_finite())
            }
        })
    }
}

fn col_sums(m: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (acc, &v) in out.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    out
}

/// Zero the gradient wherever the rectifier was inactive (`pre <= 0`).
fn gate_by_rectifier(grad: &mut Mat, pre: &Mat) {
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Mean cross-entropy and descent gradients of
/// `ce_objective + beta * sum_l D(U_l)` in one pass.
pub fn ce_with_gradients(
    net: &Network,
    batch: &Mat,
    labels: &[usize],
    beta: f64,
) -> Result<(f64, NetGradients)> {
    check_labels(batch, labels, net.classes())?;
    if batch.rows() == 0 {
        return Err(HopeError::InvalidArgument("objective over an empty batch".into()));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(HopeError::InvalidArgument(format!(
            "penalty weight must be finite and nonnegative, got {beta}"
        )));
    }
    let pass = net.forward(batch)?;
    let n = batch.rows();
    let inv_n = 1.0 / n as f64;

    // Softmax residuals scaled by 1/N drive the whole backward pass.
    let mut loss = 0.0;
    let mut g = Mat::zeros(n, net.classes());
    for (i, &y) in labels.iter().enumerate() {
        let row = pass.logits.row(i);
        let lse = logsumexp(row);
        loss += lse - row[y];
        let grow = g.row_mut(i);
        for (c, &v) in row.iter().enumerate() {
            grow[c] = ((v - lse).exp() - if c == y { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    loss *= inv_n;

    let last_hidden = pass.states.last().map(|s| &s.out).unwrap_or(batch);
    let d_classifier_w = g.matmul_tn(last_hidden);
    let d_classifier_b = col_sums(&g);
    g = g.matmul(&net.classifier.weights);

    let mut layer_grads = Vec::with_capacity(net.layers.len());
    for (idx, layer) in net.layers.iter().enumerate().rev() {
        let state = &pass.states[idx];
        let input = if idx == 0 { batch } else { &pass.states[idx - 1].out };
        gate_by_rectifier(&mut g, &state.pre);
        match layer {
            Layer::Dense(d) => {
                let d_w = g.matmul_tn(input);
                let d_b = col_sums(&g);
                g = g.matmul(&d.weights);
                layer_grads.push(LayerGrads::Dense { d_w, d_b });
            }
            Layer::Hope(h) => {
                let cache = state.hope.as_ref().expect("hope state for hope layer");
                let unit_sums = col_sums(&g);
                let mut d_mu = g.matmul_tn(&cache.z);
                let d_bias = match &h.bias {
                    HopeBias::Free(_) => unit_sums,
                    HopeBias::ExactVmf => {
                        // b_k = ln pi_k + ln C_M(|mu_k|): the normalizer term
                        // flows into mu_k, the weight term into pi_k.
                        let factors = h.log_c_gradient_factors()?;
                        let dirs = h.model.mean_dirs();
                        for k in 0..h.output_dim() {
                            let s = unit_sums[k] * factors[k];
                            for (dst, &mu) in d_mu.row_mut(k).iter_mut().zip(dirs.row(k)) {
                                *dst += s * mu;
                            }
                        }
                        let mut d_pi: Vec<f64> = unit_sums
                            .iter()
                            .zip(h.model.weights())
                            .map(|(&s, &pi)| s / pi)
                            .collect();
                        // Keep steps on the simplex tangent: remove the
                        // all-ones component.
                        let mean = d_pi.iter().sum::<f64>() / d_pi.len() as f64;
                        for v in d_pi.iter_mut() {
                            *v -= mean;
                        }
                        d_pi
                    }
                };
                g = g.matmul(h.model.mean_dirs());
                if let Some(norms) = &cache.z_norms {
                    // z was unit-normalized: push through the projector
                    // (I - zz^T)/|z_raw| row by row.
                    for i in 0..g.rows() {
                        let zi = cache.z.row(i);
                        let gi = g.row_mut(i);
                        let along = dot(gi, zi);
                        for (gv, &zv) in gi.iter_mut().zip(zi) {
                            *gv = (*gv - along * zv) / norms[i];
                        }
                    }
                }
                let mut d_u = g.matmul_tn(input);
                if beta != 0.0 {
                    d_u.scaled_add(beta, &h.projection.penalty_gradient()?);
                }
                g = g.matmul(h.projection.mat());
                layer_grads.push(LayerGrads::Hope { d_u, d_mu, d_bias });
            }
        }
    }
    layer_grads.reverse();

    Ok((loss, NetGradients { layers: layer_grads, d_classifier_w, d_classifier_b }))
}

/// Descent gradients of `ce_objective + beta * sum_l D(U_l)`.
pub fn ce_backprop(
    net: &Network,
    batch: &Mat,
    labels: &[usize],
    beta: f64,
) -> Result<NetGradients> {
    ce_with_gradients(net, batch, labels, beta).map(|(_, g)| g)
}

/// One token of an architecture string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchItem {
    /// Plain rectified dense layer with this many units.
    Dense(usize),
    /// HOPE layer `[M-K]`: latent dim M, K components.
    Hope { latent: usize, components: usize },
}

/// Parsed architecture: input width, hidden items, class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    pub input: usize,
    pub items: Vec<ArchItem>,
    pub classes: usize,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.input)?;
        for item in &self.items {
            match item {
                ArchItem::Dense(k) => write!(f, "-{k}")?,
                ArchItem::Hope { latent, components } => write!(f, "-[{latent}-{components}]")?,
            }
        }
        write!(f, "-{}", self.classes)
    }
}

fn parse_dim(tok: &str, s: &str) -> Result<usize> {
    let v: usize = tok
        .parse()
        .map_err(|_| HopeError::InvalidArgument(format!("bad dimension {tok:?} in {s:?}")))?;
    if v == 0 {
        return Err(HopeError::InvalidArgument(format!("zero dimension in {s:?}")));
    }
    Ok(v)
}

/// Parse an architecture string such as `"784-[400-1200]-1200-10"`.
pub fn parse_arch(s: &str) -> Result<Arch> {
    let mut tokens: Vec<&str> = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth = depth.checked_sub(1).ok_or_else(|| {
                    HopeError::InvalidArgument(format!("unbalanced ']' in {s:?}"))
                })?;
            }
            '-' if depth == 0 => {
                tokens.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(HopeError::InvalidArgument(format!("unbalanced '[' in {s:?}")));
    }
    tokens.push(&s[start..]);
    if tokens.len() < 2 {
        return Err(HopeError::InvalidArgument(format!(
            "architecture {s:?} needs at least input and class dims"
        )));
    }
    let input = parse_dim(tokens[0], s)?;
    let classes = parse_dim(tokens[tokens.len() - 1], s)?;
    let mut items = Vec::new();
    for tok in &tokens[1..tokens.len() - 1] {
        if let Some(inner) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            let parts: Vec<&str> = inner.split('-').collect();
            if parts.len() != 2 {
                return Err(HopeError::InvalidArgument(format!(
                    "HOPE token {tok:?} must be [latent-components]"
                )));
            }
            items.push(ArchItem::Hope {
                latent: parse_dim(parts[0], s)?,
                components: parse_dim(parts[1], s)?,
            });
        } else {
            items.push(ArchItem::Dense(parse_dim(tok, s)?));
        }
    }
    Ok(Arch { input, items, classes })
}

/// Bias parameterization used for HOPE layers built by `stack`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasKind {
    ExactVmf,
    Free,
}

/// Build a randomly initialized network from a parsed architecture.
///
/// All weights use the fan-sum uniform init with the given `gamma`;
/// projection rows are unit-normalized, biases start at zero (free) or
/// uniform mixture weights (exact).
pub fn stack<R: Rng + ?Sized>(
    arch: &Arch,
    bias: BiasKind,
    gamma: f64,
    rng: &mut R,
) -> Result<Network> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(HopeError::InvalidArgument(format!(
            "init scale gamma must be positive and finite, got {gamma}"
        )));
    }
    let mut layers = Vec::with_capacity(arch.items.len());
    let mut width = arch.input;
    for item in &arch.items {
        match *item {
            ArchItem::Dense(k) => {
                layers.push(Layer::Dense(DenseLayer::random_init(k, width, gamma, rng)?));
                width = k;
            }
            ArchItem::Hope { latent, components } => {
                let exact = matches!(bias, BiasKind::ExactVmf);
                layers.push(Layer::Hope(HopeLayer::random_init(
                    width, latent, components, exact, gamma, rng,
                )?));
                width = components;
            }
        }
    }
    let classifier = LinearLayer::random_init(arch.classes, width, gamma, rng)?;
    Network::new(layers, classifier)
}
