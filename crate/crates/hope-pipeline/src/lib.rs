//! Unsupervised feature learning over image patches.
//!
//! The pipeline samples small patches from grayscale images, normalizes
//! each one, fits a patch-level extractor (kmeans, spkmeans, or one of the
//! von Mises-Fisher mixture variants built on [`hope_core`]), sweeps it
//! over every window of an image with quadrant pooling, and trains a
//! linear softmax classifier on the pooled features.

pub mod classifier;
pub mod cluster;
pub mod extractor;
pub mod features_io;
pub mod image;
pub mod patch;
pub mod pca;
pub mod pool;

pub use classifier::{
    train_linear_classifier, ClassifierConfig, ClassifierEpoch, ClassifierReport,
    LinearClassifier,
};
pub use cluster::{fit_kmeans, fit_spkmeans};
pub use extractor::{
    fit_hope_movmf, fit_movmf, fit_pca_movmf, ExtractorKind, FeatureExtractor, DEFAULT_KAPPA0,
    PRUNE_FLOOR,
};
pub use features_io::{read_features, write_features, FeatureFileError, FEATURE_MAGIC};
pub use image::ImageSet;
pub use patch::{extract_patches, normalize_patch, PatchSet, STD_FLOOR};
pub use pca::{fit_pca, symmetric_eigen, PcaModel};
pub use pool::{convolve_pool, pool_images};

pub use hope_core::{HopeError, Result};
