//! HOPE layers as neural networks: scoring, collapse, supervised training.
//!
//! A HOPE layer is a linear projection followed by per-component mixture
//! scores `phi_k` and rectified pruning `eta_k = max(0, phi_k - eps)`. With
//! latent normalization off that pair is exactly one dense ReLU layer
//! (`w_k = U^T mu_k`), which `collapse` materializes. This crate stacks such
//! layers with plain dense layers under a softmax head, differentiates the
//! cross-entropy objective plus the orthogonality penalty through all of it,
//! and trains the result with momentum SGD and unit-norm projection rows.
//!
//! Architectures are written as strings: `"784-[400-1200]-1200-10"` is a
//! HOPE layer (latent 400, 1200 components), a dense layer of 1200 units,
//! and a 10-way classifier.

pub mod layer;
pub mod network;
pub mod trainer;

pub use layer::{DenseLayer, HopeBias, HopeLayer, LinearLayer};
pub use network::{
    ce_backprop, ce_objective, ce_with_gradients, parse_arch, stack, Arch, ArchItem, BiasKind,
    Layer, LayerGrads, NetGradients, Network,
};
pub use trainer::{
    supervised_defaults, train_supervised, SupervisedEpoch, SupervisedOptions, SupervisedReport,
    DENSE_WEIGHT_DECAY,
};

pub use hope_core::{HopeError, Result};
