//! Versioned on-disk container for trained artifacts.
//!
//! Layout: magic `b"HOPE"`, u32 version, a sequence of sections, then a
//! trailing FNV-1a-64 checksum over every preceding byte. Each section is
//! `[u32 tag][u64 byte length][payload]`; all integers and floats are
//! little-endian, floats stored as raw IEEE-754 bits so a load reproduces
//! every parameter bit-exactly.

use hope_core::{
    DiagonalGmm, HopeModel, Mat, MixtureModel, MovMf, NoiseMode, NoiseModel, ProjectionMatrix,
};
use hope_nn::{DenseLayer, HopeBias, HopeLayer, Layer, LinearLayer, Network};
use hope_pipeline::{ExtractorKind, FeatureExtractor, PcaModel};
use std::path::Path;
use thiserror::Error;

pub const MODEL_MAGIC: [u8; 4] = *b"HOPE";
pub const MODEL_VERSION: u32 = 1;

const SECTION_CONFIG: u32 = 1;
const SECTION_MODEL: u32 = 2;
const SECTION_REPORT: u32 = 3;

const KIND_HOPE: u32 = 1;
const KIND_NETWORK: u32 = 2;
const KIND_EXTRACTOR: u32 = 3;
const KIND_DENSE: u32 = 4;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file: magic {found:02x?}")]
    Magic { found: [u8; 4] },
    #[error("unsupported model file version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("invalid model parameters: {0}")]
    Model(#[from] hope_core::HopeError),
}

type Result<T> = std::result::Result<T, ModelFileError>;

/// The artifact stored in a model file.
#[derive(Debug, Clone)]
pub enum ModelPayload {
    Hope(HopeModel),
    Network(Network),
    Extractor(FeatureExtractor),
    Dense(DenseLayer),
}

impl ModelPayload {
    pub fn describe(&self) -> &'static str {
        match self {
            ModelPayload::Hope(_) => "hope model",
            ModelPayload::Network(_) => "network",
            ModelPayload::Extractor(_) => "feature extractor",
            ModelPayload::Dense(_) => "dense layer",
        }
    }
}

/// A payload plus the run that produced it.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub payload: ModelPayload,
    /// The producing run's resolved configuration, line-oriented.
    pub config: String,
    /// Line-delimited training records from the producing run.
    pub report: Vec<String>,
}

impl ModelFile {
    pub fn new(payload: ModelPayload) -> Self {
        ModelFile { payload, config: String::new(), report: Vec::new() }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    fn new() -> Self {
        Enc { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn vec_f64(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    fn mat(&mut self, m: &Mat) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for &x in m.data() {
            self.f64(x);
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Dec { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| corrupt("length overflow"))?;
        if end > self.buf.len() {
            return Err(corrupt(format!(
                "payload ends at byte {} but {} are needed",
                self.buf.len(),
                end
            )));
        }
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("count exceeds address space"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn vec_f64(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > self.buf.len() / 8 + 1 {
            return Err(corrupt("vector length exceeds payload"));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn mat(&mut self) -> Result<Mat> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows.checked_mul(cols).ok_or_else(|| corrupt("matrix size overflow"))?;
        if n > self.buf.len() / 8 + 1 {
            return Err(corrupt("matrix size exceeds payload"));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        Ok(Mat::from_vec(rows, cols, data))
    }

    fn finished(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(corrupt(format!(
                "{} trailing bytes after the payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn corrupt(msg: impl Into<String>) -> ModelFileError {
    ModelFileError::Corrupt(msg.into())
}

fn enc_projection(e: &mut Enc, p: &ProjectionMatrix) {
    e.mat(p.mat());
}

fn dec_projection(d: &mut Dec) -> Result<ProjectionMatrix> {
    Ok(ProjectionMatrix::new(d.mat()?)?)
}

fn enc_movmf(e: &mut Enc, m: &MovMf) {
    e.vec_f64(m.weights());
    e.mat(m.mean_dirs());
}

fn dec_movmf(d: &mut Dec) -> Result<MovMf> {
    let weights = d.vec_f64()?;
    let dirs = d.mat()?;
    Ok(MovMf::new(weights, dirs)?)
}

fn enc_gmm(e: &mut Enc, g: &DiagonalGmm) {
    e.vec_f64(g.weights());
    e.mat(g.means());
    e.mat(g.variances());
}

fn dec_gmm(d: &mut Dec) -> Result<DiagonalGmm> {
    let weights = d.vec_f64()?;
    let means = d.mat()?;
    let variances = d.mat()?;
    Ok(DiagonalGmm::new(weights, means, variances)?)
}

fn enc_mixture(e: &mut Enc, m: &MixtureModel) {
    match m {
        MixtureModel::Gmm(g) => {
            e.u32(0);
            enc_gmm(e, g);
        }
        MixtureModel::MovMf { model, normalize_z } => {
            e.u32(1);
            enc_movmf(e, model);
            e.u8(u8::from(*normalize_z));
        }
    }
}

fn dec_mixture(d: &mut Dec) -> Result<MixtureModel> {
    match d.u32()? {
        0 => Ok(MixtureModel::Gmm(dec_gmm(d)?)),
        1 => {
            let model = dec_movmf(d)?;
            let normalize_z = d.u8()? != 0;
            Ok(MixtureModel::MovMf { model, normalize_z })
        }
        tag => Err(corrupt(format!("unknown mixture tag {tag}"))),
    }
}

fn enc_noise(e: &mut Enc, n: &NoiseModel) {
    e.f64(n.sigma2);
    e.u8(match n.mode {
        NoiseMode::Orthonormal => 0,
        NoiseMode::FreeNorm => 1,
    });
    e.u8(u8::from(n.fixed));
}

fn dec_noise(d: &mut Dec) -> Result<NoiseModel> {
    let sigma2 = d.f64()?;
    let mode = match d.u8()? {
        0 => NoiseMode::Orthonormal,
        1 => NoiseMode::FreeNorm,
        tag => return Err(corrupt(format!("unknown noise mode {tag}"))),
    };
    let fixed = d.u8()? != 0;
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(corrupt(format!("noise variance {sigma2} out of range")));
    }
    Ok(NoiseModel { sigma2, mode, fixed })
}

fn enc_hope_model(e: &mut Enc, m: &HopeModel) {
    enc_projection(e, &m.projection);
    enc_mixture(e, &m.mixture);
    enc_noise(e, &m.noise);
}

fn dec_hope_model(d: &mut Dec) -> Result<HopeModel> {
    let projection = dec_projection(d)?;
    let mixture = dec_mixture(d)?;
    let noise = dec_noise(d)?;
    Ok(HopeModel::new(projection, mixture, noise)?)
}

fn enc_bias(e: &mut Enc, b: &HopeBias) {
    match b {
        HopeBias::ExactVmf => e.u32(0),
        HopeBias::Free(v) => {
            e.u32(1);
            e.vec_f64(v);
        }
    }
}

fn dec_bias(d: &mut Dec) -> Result<HopeBias> {
    match d.u32()? {
        0 => Ok(HopeBias::ExactVmf),
        1 => Ok(HopeBias::Free(d.vec_f64()?)),
        tag => Err(corrupt(format!("unknown bias tag {tag}"))),
    }
}

fn enc_hope_layer(e: &mut Enc, l: &HopeLayer) {
    enc_projection(e, &l.projection);
    enc_movmf(e, &l.model);
    e.f64(l.threshold);
    e.u8(u8::from(l.normalize_z));
    enc_bias(e, &l.bias);
}

fn dec_hope_layer(d: &mut Dec) -> Result<HopeLayer> {
    let projection = dec_projection(d)?;
    let model = dec_movmf(d)?;
    let threshold = d.f64()?;
    let normalize_z = d.u8()? != 0;
    let bias = dec_bias(d)?;
    Ok(HopeLayer::new(projection, model, threshold, normalize_z, bias)?)
}

fn enc_dense_layer(e: &mut Enc, l: &DenseLayer) {
    e.mat(&l.weights);
    e.vec_f64(&l.bias);
}

fn dec_dense_layer(d: &mut Dec) -> Result<DenseLayer> {
    let weights = d.mat()?;
    let bias = d.vec_f64()?;
    Ok(DenseLayer::new(weights, bias)?)
}

fn enc_network(e: &mut Enc, n: &Network) {
    e.u64(n.layers.len() as u64);
    for layer in &n.layers {
        match layer {
            Layer::Hope(l) => {
                e.u32(0);
                enc_hope_layer(e, l);
            }
            Layer::Dense(l) => {
                e.u32(1);
                enc_dense_layer(e, l);
            }
        }
    }
    e.mat(&n.classifier.weights);
    e.vec_f64(&n.classifier.bias);
}

fn dec_network(d: &mut Dec) -> Result<Network> {
    let count = d.usize()?;
    if count > d.buf.len() {
        return Err(corrupt("layer count exceeds payload"));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        layers.push(match d.u32()? {
            0 => Layer::Hope(dec_hope_layer(d)?),
            1 => Layer::Dense(dec_dense_layer(d)?),
            tag => return Err(corrupt(format!("unknown layer tag {tag}"))),
        });
    }
    let weights = d.mat()?;
    let bias = d.vec_f64()?;
    let classifier = LinearLayer::new(weights, bias)?;
    Ok(Network::new(layers, classifier)?)
}

fn enc_pca(e: &mut Enc, p: &PcaModel) {
    e.mat(p.basis());
    e.vec_f64(p.mean());
    e.vec_f64(p.eigenvalues());
}

fn dec_pca(d: &mut Dec) -> Result<PcaModel> {
    let basis = d.mat()?;
    let mean = d.vec_f64()?;
    let eigenvalues = d.vec_f64()?;
    Ok(PcaModel::new(basis, mean, eigenvalues)?)
}

fn kind_tag(kind: ExtractorKind) -> u32 {
    match kind {
        ExtractorKind::Kmeans => 0,
        ExtractorKind::Spkmeans => 1,
        ExtractorKind::Movmf => 2,
        ExtractorKind::PcaMovmf => 3,
        ExtractorKind::HopeMovmf => 4,
    }
}

fn tag_kind(tag: u32) -> Result<ExtractorKind> {
    Ok(match tag {
        0 => ExtractorKind::Kmeans,
        1 => ExtractorKind::Spkmeans,
        2 => ExtractorKind::Movmf,
        3 => ExtractorKind::PcaMovmf,
        4 => ExtractorKind::HopeMovmf,
        _ => return Err(corrupt(format!("unknown extractor kind {tag}"))),
    })
}

fn enc_extractor(e: &mut Enc, x: &FeatureExtractor) {
    match x {
        FeatureExtractor::Unfitted { kind } => {
            e.u32(0);
            e.u32(kind_tag(*kind));
        }
        FeatureExtractor::Kmeans { centroids, epsilon } => {
            e.u32(1);
            e.mat(centroids);
            e.f64(*epsilon);
        }
        FeatureExtractor::Spkmeans { centroids, epsilon } => {
            e.u32(2);
            e.mat(centroids);
            e.f64(*epsilon);
        }
        FeatureExtractor::Movmf { model, epsilon } => {
            e.u32(3);
            enc_movmf(e, model);
            e.f64(*epsilon);
        }
        FeatureExtractor::PcaMovmf { pca, model, epsilon } => {
            e.u32(4);
            enc_pca(e, pca);
            enc_movmf(e, model);
            e.f64(*epsilon);
        }
        FeatureExtractor::HopeMovmf { projection, model, epsilon } => {
            e.u32(5);
            enc_projection(e, projection);
            enc_movmf(e, model);
            e.f64(*epsilon);
        }
    }
}

fn dec_extractor(d: &mut Dec) -> Result<FeatureExtractor> {
    Ok(match d.u32()? {
        0 => FeatureExtractor::Unfitted { kind: tag_kind(d.u32()?)? },
        1 => FeatureExtractor::Kmeans { centroids: d.mat()?, epsilon: d.f64()? },
        2 => FeatureExtractor::Spkmeans { centroids: d.mat()?, epsilon: d.f64()? },
        3 => FeatureExtractor::Movmf { model: dec_movmf(d)?, epsilon: d.f64()? },
        4 => FeatureExtractor::PcaMovmf {
            pca: dec_pca(d)?,
            model: dec_movmf(d)?,
            epsilon: d.f64()?,
        },
        5 => FeatureExtractor::HopeMovmf {
            projection: dec_projection(d)?,
            model: dec_movmf(d)?,
            epsilon: d.f64()?,
        },
        tag => return Err(corrupt(format!("unknown extractor variant {tag}"))),
    })
}

fn enc_payload(p: &ModelPayload) -> Vec<u8> {
    let mut e = Enc::new();
    match p {
        ModelPayload::Hope(m) => {
            e.u32(KIND_HOPE);
            enc_hope_model(&mut e, m);
        }
        ModelPayload::Network(n) => {
            e.u32(KIND_NETWORK);
            enc_network(&mut e, n);
        }
        ModelPayload::Extractor(x) => {
            e.u32(KIND_EXTRACTOR);
            enc_extractor(&mut e, x);
        }
        ModelPayload::Dense(l) => {
            e.u32(KIND_DENSE);
            enc_dense_layer(&mut e, l);
        }
    }
    e.buf
}

fn dec_payload(bytes: &[u8]) -> Result<ModelPayload> {
    let mut d = Dec::new(bytes);
    let payload = match d.u32()? {
        KIND_HOPE => ModelPayload::Hope(dec_hope_model(&mut d)?),
        KIND_NETWORK => ModelPayload::Network(dec_network(&mut d)?),
        KIND_EXTRACTOR => ModelPayload::Extractor(dec_extractor(&mut d)?),
        KIND_DENSE => ModelPayload::Dense(dec_dense_layer(&mut d)?),
        tag => return Err(corrupt(format!("unknown payload kind {tag}"))),
    };
    d.finished()?;
    Ok(payload)
}

/// Serialize a model file to bytes (magic, version, sections, checksum).
pub fn model_bytes(file: &ModelFile) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let section = |tag: u32, body: &[u8], out: &mut Vec<u8>| {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(body);
    };
    section(SECTION_CONFIG, file.config.as_bytes(), &mut out);
    section(SECTION_MODEL, &enc_payload(&file.payload), &mut out);
    section(SECTION_REPORT, file.report.join("\n").as_bytes(), &mut out);
    let checksum = fnv1a(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

pub fn save_model(file: &ModelFile, path: &Path) -> Result<()> {
    std::fs::write(path, model_bytes(file))
        .map_err(|source| ModelFileError::Io { path: path.display().to_string(), source })
}

/// Parse model file bytes; the inverse of `model_bytes`.
pub fn parse_model(bytes: &[u8]) -> Result<ModelFile> {
    if bytes.len() < MODEL_MAGIC.len() + 4 + 8 {
        return Err(corrupt(format!("file has {} bytes, too short for a header", bytes.len())));
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if magic != MODEL_MAGIC {
        return Err(ModelFileError::Magic { found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(ModelFileError::Version { found: version, supported: MODEL_VERSION });
    }
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let computed = fnv1a(&bytes[..body_end]);
    if stored != computed {
        return Err(ModelFileError::Checksum { stored, computed });
    }

    let mut config = String::new();
    let mut report = Vec::new();
    let mut payload = None;
    let mut d = Dec::new(&bytes[8..body_end]);
    while d.pos < d.buf.len() {
        let tag = d.u32()?;
        let len = d.usize()?;
        let body = d.take(len)?;
        match tag {
            SECTION_CONFIG => {
                config = String::from_utf8(body.to_vec())
                    .map_err(|_| corrupt("config section is not UTF-8"))?;
            }
            SECTION_MODEL => {
                if payload.is_some() {
                    return Err(corrupt("duplicate model section"));
                }
                payload = Some(dec_payload(body)?);
            }
            SECTION_REPORT => {
                let text = String::from_utf8(body.to_vec())
                    .map_err(|_| corrupt("report section is not UTF-8"))?;
                report = if text.is_empty() {
                    Vec::new()
                } else {
                    text.lines().map(str::to_string).collect()
                };
            }
            other => return Err(corrupt(format!("unknown section tag {other}"))),
        }
    }
    let payload = payload.ok_or_else(|| corrupt("missing model section"))?;
    Ok(ModelFile { payload, config, report })
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path)
        .map_err(|source| ModelFileError::Io { path: path.display().to_string(), source })?;
    parse_model(&bytes)
}
