//! Patch-level feature extractors.
//!
//! Five kinds share one interface. kmeans scores by thresholded distance,
//! spkmeans by thresholded cosine, and the three mixture kinds by the
//! rectified component log-score
//! `max(0, ln π_k + ln C_M(|μ_k|) + z̃·μ_k − ε)` with `z̃` the
//! unit-normalized latent vector. They differ only in how `z̃` arises:
//! the plain mixture keeps the identity projection, the PCA variant uses a
//! frozen principal basis, and the full model learns its projection.

use std::fmt;
use std::str::FromStr;

use hope_core::mat::norm;
use hope_core::movmf::PROJECTION_FLOOR;
use hope_core::{
    train_unsupervised_with, HopeError, HopeModel, Mat, MixtureModel, MovMf, NoiseMode,
    NoiseModel, ProjectionMatrix, Result, Sigma2Mode, TrainConfig, TrainOptions, TrainReport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pca::{fit_pca, PcaModel};

/// Initial concentration for mixture components seeded from data points.
pub const DEFAULT_KAPPA0: f64 = 5.0;
/// Components whose weight falls below this are dropped after fitting.
pub const PRUNE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorKind {
    Kmeans,
    Spkmeans,
    Movmf,
    PcaMovmf,
    HopeMovmf,
}

impl ExtractorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExtractorKind::Kmeans => "kmeans",
            ExtractorKind::Spkmeans => "spkmeans",
            ExtractorKind::Movmf => "movmf",
            ExtractorKind::PcaMovmf => "pca-movmf",
            ExtractorKind::HopeMovmf => "hope-movmf",
        }
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtractorKind {
    type Err = HopeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ExtractorKind::Kmeans),
            "spkmeans" => Ok(ExtractorKind::Spkmeans),
            "movmf" => Ok(ExtractorKind::Movmf),
            "pca-movmf" => Ok(ExtractorKind::PcaMovmf),
            "hope-movmf" => Ok(ExtractorKind::HopeMovmf),
            other => Err(HopeError::InvalidArgument(format!(
                "unknown extractor kind {other:?}"
            ))),
        }
    }
}

/// A fitted patch featurizer, or a declared-but-unfitted placeholder.
#[derive(Debug, Clone)]
pub enum FeatureExtractor {
    Unfitted { kind: ExtractorKind },
    Kmeans { centroids: Mat, epsilon: f64 },
    Spkmeans { centroids: Mat, epsilon: f64 },
    Movmf { model: MovMf, epsilon: f64 },
    PcaMovmf { pca: PcaModel, model: MovMf, epsilon: f64 },
    HopeMovmf { projection: ProjectionMatrix, model: MovMf, epsilon: f64 },
}

impl FeatureExtractor {
    pub fn kind(&self) -> ExtractorKind {
        match self {
            FeatureExtractor::Unfitted { kind } => *kind,
            FeatureExtractor::Kmeans { .. } => ExtractorKind::Kmeans,
            FeatureExtractor::Spkmeans { .. } => ExtractorKind::Spkmeans,
            FeatureExtractor::Movmf { .. } => ExtractorKind::Movmf,
            FeatureExtractor::PcaMovmf { .. } => ExtractorKind::PcaMovmf,
            FeatureExtractor::HopeMovmf { .. } => ExtractorKind::HopeMovmf,
        }
    }

    /// Number of features per patch; zero while unfitted.
    pub fn k(&self) -> usize {
        match self {
            FeatureExtractor::Unfitted { .. } => 0,
            FeatureExtractor::Kmeans { centroids, .. }
            | FeatureExtractor::Spkmeans { centroids, .. } => centroids.rows(),
            FeatureExtractor::Movmf { model, .. }
            | FeatureExtractor::PcaMovmf { model, .. }
            | FeatureExtractor::HopeMovmf { model, .. } => model.k(),
        }
    }

    /// Patch dimension expected by [`FeatureExtractor::featurize_patch`];
    /// zero while unfitted.
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureExtractor::Unfitted { .. } => 0,
            FeatureExtractor::Kmeans { centroids, .. }
            | FeatureExtractor::Spkmeans { centroids, .. } => centroids.cols(),
            FeatureExtractor::Movmf { model, .. } => model.latent_dim(),
            FeatureExtractor::PcaMovmf { pca, .. } => pca.input_dim(),
            FeatureExtractor::HopeMovmf { projection, .. } => projection.input_dim(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            FeatureExtractor::Unfitted { .. } => 0.0,
            FeatureExtractor::Kmeans { epsilon, .. }
            | FeatureExtractor::Spkmeans { epsilon, .. }
            | FeatureExtractor::Movmf { epsilon, .. }
            | FeatureExtractor::PcaMovmf { epsilon, .. }
            | FeatureExtractor::HopeMovmf { epsilon, .. } => *epsilon,
        }
    }

    pub fn set_epsilon(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(HopeError::InvalidArgument(format!(
                "threshold must be finite, got {value}"
            )));
        }
        match self {
            FeatureExtractor::Unfitted { .. } => Err(unfitted_error()),
            FeatureExtractor::Kmeans { epsilon, .. }
            | FeatureExtractor::Spkmeans { epsilon, .. }
            | FeatureExtractor::Movmf { epsilon, .. }
            | FeatureExtractor::PcaMovmf { epsilon, .. }
            | FeatureExtractor::HopeMovmf { epsilon, .. } => {
                *epsilon = value;
                Ok(())
            }
        }
    }

    /// Drops mixture components whose weight fell below `floor`; the
    /// feature dimension shrinks to match. No-op for clustering kinds.
    /// Returns how many components were removed.
    pub fn prune_empty(&mut self, floor: f64) -> Result<usize> {
        match self {
            FeatureExtractor::Unfitted { .. } => Err(unfitted_error()),
            FeatureExtractor::Kmeans { .. } | FeatureExtractor::Spkmeans { .. } => Ok(0),
            FeatureExtractor::Movmf { model, .. }
            | FeatureExtractor::PcaMovmf { model, .. }
            | FeatureExtractor::HopeMovmf { model, .. } => model.prune_empty(floor),
        }
    }

    /// Featurizes every row of `patches` into a `N×K` activation matrix.
    pub fn featurize_batch(&self, patches: &Mat) -> Result<Mat> {
        if matches!(self, FeatureExtractor::Unfitted { .. }) {
            return Err(unfitted_error());
        }
        if patches.cols() != self.input_dim() {
            return Err(HopeError::DimensionMismatch(format!(
                "patches have dimension {}, extractor expects {}",
                patches.cols(),
                self.input_dim()
            )));
        }
        if !patches.is_finite() {
            return Err(HopeError::Numeric("non-finite patch".into()));
        }

        match self {
            FeatureExtractor::Unfitted { .. } => unreachable!(),
            FeatureExtractor::Kmeans { centroids, epsilon } => {
                let mut inner = patches.matmul_nt(centroids);
                let centroid_sq: Vec<f64> = (0..centroids.rows())
                    .map(|c| centroids.row(c).iter().map(|v| v * v).sum())
                    .collect();
                for i in 0..inner.rows() {
                    let point_sq: f64 = patches.row(i).iter().map(|v| v * v).sum();
                    for (s, c_sq) in inner.row_mut(i).iter_mut().zip(centroid_sq.iter()) {
                        let d = (point_sq - 2.0 * *s + c_sq).max(0.0).sqrt();
                        *s = (d - epsilon).max(0.0);
                    }
                }
                Ok(inner)
            }
            FeatureExtractor::Spkmeans { centroids, epsilon } => {
                let unit = crate::cluster::normalized_rows(patches);
                let mut scores = unit.matmul_nt(centroids);
                rectify(&mut scores, *epsilon);
                Ok(scores)
            }
            FeatureExtractor::Movmf { model, epsilon } => {
                mixture_scores(model, patches.clone(), *epsilon)
            }
            FeatureExtractor::PcaMovmf { pca, model, epsilon } => {
                mixture_scores(model, pca.project_batch(patches)?, *epsilon)
            }
            FeatureExtractor::HopeMovmf { projection, model, epsilon } => {
                mixture_scores(model, patches.matmul_nt(projection.mat()), *epsilon)
            }
        }
    }

    /// Single-patch convenience over [`FeatureExtractor::featurize_batch`].
    pub fn featurize_patch(&self, patch: &[f64]) -> Result<Vec<f64>> {
        let mut m = Mat::zeros(1, patch.len());
        m.row_mut(0).copy_from_slice(patch);
        let out = self.featurize_batch(&m)?;
        Ok(out.row(0).to_vec())
    }
}

fn unfitted_error() -> HopeError {
    HopeError::InvalidArgument("extractor is not fitted; fit or load parameters first".into())
}

fn rectify(scores: &mut Mat, epsilon: f64) {
    for v in scores.data_mut() {
        *v = (*v - epsilon).max(0.0);
    }
}

/// Rectified component log-scores of each latent row. Rows too short to
/// orient on the sphere produce all-zero features.
fn mixture_scores(model: &MovMf, mut z: Mat, epsilon: f64) -> Result<Mat> {
    let coeffs = model.log_coefficients()?;
    let mut degenerate = Vec::new();
    for i in 0..z.rows() {
        let n = norm(z.row(i));
        if n < PROJECTION_FLOOR {
            degenerate.push(i);
            continue;
        }
        let inv = 1.0 / n;
        for v in z.row_mut(i) {
            *v *= inv;
        }
    }
    let mut scores = z.matmul_nt(model.mean_dirs());
    for i in 0..scores.rows() {
        for (s, c) in scores.row_mut(i).iter_mut().zip(coeffs.iter()) {
            *s = (*s + c - epsilon).max(0.0);
        }
    }
    for i in degenerate {
        scores.row_mut(i).fill(0.0);
    }
    Ok(scores)
}

/// Shared plumbing for the three mixture extractors: seed components from
/// projected data points, train by minibatch gradient ascent, then drop
/// empty components.
fn fit_mixture(
    data: &Mat,
    projection: ProjectionMatrix,
    freeze_u: bool,
    k: usize,
    kappa0: f64,
    config: &TrainConfig,
) -> Result<(HopeModel, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let z0 = data.matmul_nt(projection.mat());
    let mixture = MovMf::init_from_points(k, &z0, kappa0, &mut rng)?;
    let sigma2 = match config.sigma2_mode {
        Sigma2Mode::Fixed(v) => v,
        Sigma2Mode::Learned => 0.1,
    };
    let mut model = HopeModel::new(
        projection,
        MixtureModel::MovMf { model: mixture, normalize_z: true },
        NoiseModel::new(sigma2, NoiseMode::Orthonormal, true),
    )?;
    let report = train_unsupervised_with(
        &mut model,
        data,
        config,
        TrainOptions { freeze_u, ..TrainOptions::default() },
    )?;
    if let MixtureModel::MovMf { model: vmf, .. } = &mut model.mixture {
        vmf.prune_empty(PRUNE_FLOOR)?;
    }
    Ok((model, report))
}

fn into_mixture(model: HopeModel) -> MovMf {
    match model.mixture {
        MixtureModel::MovMf { model, .. } => model,
        MixtureModel::Gmm(_) => unreachable!("mixture extractors are von Mises-Fisher"),
    }
}

/// Fits a mixture directly on the patches (identity projection).
pub fn fit_movmf(
    patches: &Mat,
    k: usize,
    kappa0: f64,
    config: &TrainConfig,
) -> Result<(FeatureExtractor, TrainReport)> {
    let projection = ProjectionMatrix::new(Mat::identity(patches.cols()))?;
    let (model, report) = fit_mixture(patches, projection, true, k, kappa0, config)?;
    Ok((FeatureExtractor::Movmf { model: into_mixture(model), epsilon: 0.0 }, report))
}

/// Fits a mixture on PCA-projected patches; the principal basis stays
/// frozen during training.
pub fn fit_pca_movmf(
    patches: &Mat,
    k: usize,
    m: usize,
    kappa0: f64,
    config: &TrainConfig,
) -> Result<(FeatureExtractor, TrainReport)> {
    let pca = fit_pca(patches, m)?;
    let centered = {
        let mut c = patches.clone();
        for i in 0..c.rows() {
            for (v, mu) in c.row_mut(i).iter_mut().zip(pca.mean().iter()) {
                *v -= mu;
            }
        }
        c
    };
    let projection = ProjectionMatrix::new(pca.basis().clone())?;
    let (model, report) = fit_mixture(&centered, projection, true, k, kappa0, config)?;
    Ok((
        FeatureExtractor::PcaMovmf { pca, model: into_mixture(model), epsilon: 0.0 },
        report,
    ))
}

/// Fits the full model: projection and mixture learned jointly.
pub fn fit_hope_movmf(
    patches: &Mat,
    k: usize,
    m: usize,
    kappa0: f64,
    config: &TrainConfig,
) -> Result<(FeatureExtractor, TrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let projection = ProjectionMatrix::random_init(m, patches.cols(), &mut rng)?;
    let (model, report) = fit_mixture(patches, projection, false, k, kappa0, config)?;
    Ok((
        FeatureExtractor::HopeMovmf {
            projection: model.projection.clone(),
            model: into_mixture(model),
            epsilon: 0.0,
        },
        report,
    ))
}
