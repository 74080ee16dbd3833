//! `hope`: train projections and mixtures, extract features, collapse
//! layers, and evaluate classifiers from the command line.
//!
//! Every subcommand prints its full resolved configuration (including the
//! seed) before doing any work, and emits metrics as line-delimited
//! records, so a run can be reproduced from its own output.

use clap::{Args, Parser, Subcommand};
use hope_cli::{
    load_model, read_idx_images, read_idx_labels, save_model, CliError, CliResult, ModelFile,
    ModelPayload,
};
use hope_core::{Sigma2Mode, TrainConfig, TrainReport};
use hope_nn::{train_supervised, BiasKind, Layer, Network, SupervisedOptions};
use hope_pipeline::{
    extract_patches, fit_hope_movmf, fit_kmeans, fit_movmf, fit_pca_movmf, fit_spkmeans,
    pool_images, read_features, write_features, ExtractorKind, FeatureExtractor, ImageSet,
    DEFAULT_KAPPA0,
};
use hope_core::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "hope",
    version,
    about = "Orthogonal projections with latent mixtures: training, feature extraction, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an unsupervised feature extractor on image patches.
    TrainHope(TrainHopeArgs),
    /// Train a supervised network from an architecture string.
    TrainNet(TrainNetArgs),
    /// Pool per-patch features into one vector per image.
    ExtractFeatures(ExtractArgs),
    /// Merge projection + mixture layers into plain dense layers.
    Collapse(CollapseArgs),
    /// Classification error of a saved network on a labeled set.
    Eval(EvalArgs),
    /// Print the stored config and training records of a model file.
    Report(ReportArgs),
}

fn parse_kind(s: &str) -> Result<ExtractorKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_bias(s: &str) -> Result<BiasKind, String> {
    match s {
        "exact" => Ok(BiasKind::ExactVmf),
        "free" => Ok(BiasKind::Free),
        other => Err(format!("bias must be 'exact' or 'free', got {other:?}")),
    }
}

#[derive(Args)]
struct TrainHopeArgs {
    /// IDX image file to sample patches from.
    #[arg(long)]
    images: PathBuf,
    /// Extractor family: kmeans, spkmeans, movmf, pca-movmf, or hope-movmf.
    #[arg(long, default_value = "hope-movmf", value_parser = parse_kind)]
    kind: ExtractorKind,
    /// Mixture components / cluster count K.
    #[arg(long, default_value_t = 400)]
    components: usize,
    /// Latent dimension M (pca-movmf and hope-movmf only).
    #[arg(long, default_value_t = 20)]
    latent: usize,
    /// Number of patches to sample.
    #[arg(long, default_value_t = 100_000)]
    patches: usize,
    /// Patch side length in pixels.
    #[arg(long, default_value_t = 6)]
    side: usize,
    /// Use only the first N images (0 = all).
    #[arg(long, default_value_t = 0)]
    limit: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    minibatch: usize,
    #[arg(long, default_value_t = 0.002)]
    lr: f64,
    #[arg(long, default_value_t = 0.998)]
    lr_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    momentum_initial: f64,
    #[arg(long, default_value_t = 0.99)]
    momentum_final: f64,
    #[arg(long, default_value_t = 50)]
    momentum_ramp: usize,
    /// Orthogonality penalty weight.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Fixed residual noise variance.
    #[arg(long, default_value_t = 0.1)]
    sigma2: f64,
    /// Initial concentration for mixture components.
    #[arg(long, default_value_t = DEFAULT_KAPPA0)]
    kappa0: f64,
    /// Feature threshold override (defaults: kmeans derives one, others 0).
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the extractor model file.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainNetArgs {
    /// IDX image file (raw-pixel input).
    #[arg(long, conflicts_with = "features", required_unless_present = "features")]
    images: Option<PathBuf>,
    /// Feature matrix file (precomputed input).
    #[arg(long)]
    features: Option<PathBuf>,
    /// IDX label file.
    #[arg(long)]
    labels: PathBuf,
    /// Held-out IDX image file for per-epoch dev error.
    #[arg(long, requires = "dev_labels")]
    dev_images: Option<PathBuf>,
    /// Held-out feature matrix file for per-epoch dev error.
    #[arg(long, requires = "dev_labels", conflicts_with = "dev_images")]
    dev_features: Option<PathBuf>,
    /// IDX label file for the dev set.
    #[arg(long)]
    dev_labels: Option<PathBuf>,
    /// Architecture string, e.g. 784-[100-1000]-10 or 784-1000-10.
    #[arg(long)]
    arch: String,
    /// Mixture bias parameterization for projection layers: exact or free.
    #[arg(long, default_value = "free", value_parser = parse_bias)]
    bias: BiasKind,
    /// Weight init scale.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Use only the first N training examples (0 = all).
    #[arg(long, default_value_t = 0)]
    limit: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    minibatch: usize,
    #[arg(long, default_value_t = 0.004)]
    lr: f64,
    #[arg(long, default_value_t = 0.998)]
    lr_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    momentum_initial: f64,
    #[arg(long, default_value_t = 0.99)]
    momentum_final: f64,
    #[arg(long, default_value_t = 50)]
    momentum_ramp: usize,
    /// Orthogonality penalty weight on projection layers.
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    /// L2 decay on dense and classifier weights.
    #[arg(long, default_value_t = 1e-5)]
    weight_decay: f64,
    /// Halve the rate once dev error stalls instead of geometric decay.
    #[arg(long, default_value_t = false)]
    dev_halving: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the network model file.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Extractor model file produced by train-hope.
    #[arg(long)]
    model: PathBuf,
    /// IDX image file to featurize.
    #[arg(long)]
    images: PathBuf,
    /// Patch side length in pixels.
    #[arg(long, default_value_t = 6)]
    side: usize,
    /// Use only the first N images (0 = all).
    #[arg(long, default_value_t = 0)]
    limit: usize,
    /// Where to write the feature matrix.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CollapseArgs {
    /// Network model file with projection + mixture layers.
    #[arg(long)]
    model: PathBuf,
    /// Where to write the collapsed network.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Network model file.
    #[arg(long)]
    model: PathBuf,
    /// IDX image file (raw-pixel input).
    #[arg(long, conflicts_with = "features", required_unless_present = "features")]
    images: Option<PathBuf>,
    /// Feature matrix file (precomputed input).
    #[arg(long)]
    features: Option<PathBuf>,
    /// IDX label file.
    #[arg(long)]
    labels: PathBuf,
    /// Use only the first N examples (0 = all).
    #[arg(long, default_value_t = 0)]
    limit: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Any model file.
    #[arg(long)]
    model: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainHope(args) => train_hope(args),
        Command::TrainNet(args) => train_net(args),
        Command::ExtractFeatures(args) => extract_features(args),
        Command::Collapse(args) => collapse(args),
        Command::Eval(args) => eval(args),
        Command::Report(args) => report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Load an IDX image file into scaled images, keeping the first `limit`
/// (everything when `limit == 0`).
fn load_images(path: &Path, limit: usize) -> CliResult<ImageSet> {
    let (count, height, width, bytes) = read_idx_images(path)?;
    let n = if limit == 0 { count } else { limit.min(count) };
    Ok(ImageSet::from_bytes(n, height, width, &bytes[..n * height * width])?)
}

fn images_to_mat(set: &ImageSet) -> Mat {
    let dim = set.height() * set.width();
    let mut m = Mat::zeros(set.count(), dim);
    for i in 0..set.count() {
        m.row_mut(i).copy_from_slice(set.image(i));
    }
    m
}

/// Load a labeled batch from either raw images or a feature matrix.
fn load_labeled(
    images: Option<&Path>,
    features: Option<&Path>,
    labels_path: &Path,
    limit: usize,
) -> CliResult<(Mat, Vec<usize>)> {
    let labels = read_idx_labels(labels_path)?;
    let x = match (images, features) {
        (Some(path), None) => {
            let (count, height, width, bytes) = read_idx_images(path)?;
            if labels.len() != count {
                return Err(hope_cli::IdxError::CountMismatch {
                    images: count,
                    labels: labels.len(),
                }
                .into());
            }
            let n = if limit == 0 { count } else { limit.min(count) };
            images_to_mat(&ImageSet::from_bytes(n, height, width, &bytes[..n * height * width])?)
        }
        (None, Some(path)) => {
            let full = read_features(path)?;
            if labels.len() != full.rows() {
                return Err(hope_cli::IdxError::CountMismatch {
                    images: full.rows(),
                    labels: labels.len(),
                }
                .into());
            }
            let n = if limit == 0 { full.rows() } else { limit.min(full.rows()) };
            Mat::from_vec(n, full.cols(), full.data()[..n * full.cols()].to_vec())
        }
        _ => return Err(usage("exactly one of --images or --features is required")),
    };
    let y: Vec<usize> = labels[..x.rows()].iter().map(|&b| b as usize).collect();
    Ok((x, y))
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |v| v.display().to_string())
}

fn train_hope(args: TrainHopeArgs) -> CliResult<()> {
    let config_line = emit_config(format!(
        "config subcommand=train-hope images={} kind={} components={} latent={} patches={} \
         side={} limit={} epochs={} minibatch={} lr={} lr_decay={} momentum_initial={} \
         momentum_final={} momentum_ramp={} beta={} sigma2={} kappa0={} epsilon={} seed={} \
         output={}",
        args.images.display(),
        args.kind,
        args.components,
        args.latent,
        args.patches,
        args.side,
        args.limit,
        args.epochs,
        args.minibatch,
        args.lr,
        args.lr_decay,
        args.momentum_initial,
        args.momentum_final,
        args.momentum_ramp,
        args.beta,
        args.sigma2,
        args.kappa0,
        args.epsilon.map_or_else(|| "default".to_string(), |e| e.to_string()),
        args.seed,
        args.output.display(),
    ));

    let set = load_images(&args.images, args.limit)?;
    let patches = extract_patches(&set, args.side, args.patches, args.seed)?;
    let data = patches.data();
    let tc = TrainConfig {
        epochs: args.epochs,
        minibatch_size: args.minibatch,
        lr0: args.lr,
        lr_decay: args.lr_decay,
        momentum_initial: args.momentum_initial,
        momentum_final: args.momentum_final,
        momentum_ramp: args.momentum_ramp,
        penalty_weight: args.beta,
        sigma2_mode: Sigma2Mode::Fixed(args.sigma2),
        seed: args.seed,
        deterministic_reduction: true,
    };
    let (mut extractor, report): (FeatureExtractor, Option<TrainReport>) = match args.kind {
        ExtractorKind::Kmeans => (fit_kmeans(data, args.components, args.seed)?, None),
        ExtractorKind::Spkmeans => (fit_spkmeans(data, args.components, args.seed)?, None),
        ExtractorKind::Movmf => {
            let (x, r) = fit_movmf(data, args.components, args.kappa0, &tc)?;
            (x, Some(r))
        }
        ExtractorKind::PcaMovmf => {
            let (x, r) = fit_pca_movmf(data, args.components, args.latent, args.kappa0, &tc)?;
            (x, Some(r))
        }
        ExtractorKind::HopeMovmf => {
            let (x, r) = fit_hope_movmf(data, args.components, args.latent, args.kappa0, &tc)?;
            (x, Some(r))
        }
    };
    if let Some(eps) = args.epsilon {
        extractor.set_epsilon(eps)?;
    }
    let report_lines = report.as_ref().map(TrainReport::record_lines).unwrap_or_default();
    for line in &report_lines {
        println!("{line}");
    }
    println!(
        "record model kind={} components={} input_dim={} epsilon={}",
        extractor.kind(),
        extractor.k(),
        extractor.input_dim(),
        extractor.epsilon(),
    );
    save_model(
        &ModelFile {
            payload: ModelPayload::Extractor(extractor),
            config: config_line,
            report: report_lines,
        },
        &args.output,
    )?;
    Ok(())
}

/// Print a resolved config line and hand it back for storage, so the
/// printed run description and the one saved in the model file can never
/// drift apart.
fn emit_config(line: String) -> String {
    println!("{line}");
    line
}

fn train_net(args: TrainNetArgs) -> CliResult<()> {
    let config_line = emit_config(format!(
        "config subcommand=train-net images={} features={} labels={} dev_images={} \
         dev_features={} dev_labels={} arch={} bias={} gamma={} limit={} epochs={} minibatch={} \
         lr={} lr_decay={} momentum_initial={} momentum_final={} momentum_ramp={} beta={} \
         weight_decay={} dev_halving={} seed={} output={}",
        opt_path(&args.images),
        opt_path(&args.features),
        args.labels.display(),
        opt_path(&args.dev_images),
        opt_path(&args.dev_features),
        opt_path(&args.dev_labels),
        args.arch,
        match args.bias {
            BiasKind::ExactVmf => "exact",
            BiasKind::Free => "free",
        },
        args.gamma,
        args.limit,
        args.epochs,
        args.minibatch,
        args.lr,
        args.lr_decay,
        args.momentum_initial,
        args.momentum_final,
        args.momentum_ramp,
        args.beta,
        args.weight_decay,
        args.dev_halving,
        args.seed,
        args.output.display(),
    ));

    let (x, y) =
        load_labeled(args.images.as_deref(), args.features.as_deref(), &args.labels, args.limit)?;
    let (dev_x, dev_y) = match (&args.dev_images, &args.dev_features, &args.dev_labels) {
        (None, None, None) => {
            // No held-out set: track error on a fixed head of the training
            // data so per-epoch records stay cheap and deterministic.
            let n = x.rows().min(1000);
            let head = Mat::from_vec(n, x.cols(), x.data()[..n * x.cols()].to_vec());
            (head, y[..n].to_vec())
        }
        (imgs, feats, Some(labels)) => load_labeled(imgs.as_deref(), feats.as_deref(), labels, 0)?,
        _ => return Err(usage("dev inputs require --dev-labels")),
    };

    let arch = hope_nn::parse_arch(&args.arch)?;
    if arch.input != x.cols() {
        return Err(usage(format!(
            "architecture expects {} inputs but the data has {}",
            arch.input,
            x.cols()
        )));
    }
    if let Some(&bad) = y.iter().chain(dev_y.iter()).find(|&&l| l >= arch.classes) {
        return Err(usage(format!(
            "label {bad} out of range for {} classes",
            arch.classes
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut net = hope_nn::stack(&arch, args.bias, args.gamma, &mut rng)?;
    let tc = TrainConfig {
        epochs: args.epochs,
        minibatch_size: args.minibatch,
        lr0: args.lr,
        lr_decay: args.lr_decay,
        momentum_initial: args.momentum_initial,
        momentum_final: args.momentum_final,
        momentum_ramp: args.momentum_ramp,
        penalty_weight: args.beta,
        sigma2_mode: Sigma2Mode::Fixed(0.1),
        seed: args.seed,
        deterministic_reduction: true,
    };
    let options = SupervisedOptions {
        weight_decay: args.weight_decay,
        dev_halving: args.dev_halving,
        observer: None,
    };
    let report = train_supervised(&mut net, &x, &y, &dev_x, &dev_y, &tc, options)?;
    let report_lines = report.record_lines();
    for line in &report_lines {
        println!("{line}");
    }
    if let Some(last) = report.epochs.last() {
        println!(
            "record final train_err={:?} dev_err={:?}",
            last.train_err, last.dev_err
        );
    }
    save_model(
        &ModelFile {
            payload: ModelPayload::Network(net),
            config: config_line,
            report: report_lines,
        },
        &args.output,
    )?;
    Ok(())
}

fn extract_features(args: ExtractArgs) -> CliResult<()> {
    let config_line = emit_config(format!(
        "config subcommand=extract-features model={} images={} side={} limit={} seed=none output={}",
        args.model.display(),
        args.images.display(),
        args.side,
        args.limit,
        args.output.display(),
    ));
    let _ = config_line;

    let file = load_model(&args.model)?;
    let ModelPayload::Extractor(extractor) = file.payload else {
        return Err(usage(format!(
            "{} holds a {}; extract-features needs a feature extractor",
            args.model.display(),
            file.payload.describe()
        )));
    };
    let set = load_images(&args.images, args.limit)?;
    let pooled = pool_images(&extractor, &set, args.side)?;
    write_features(&args.output, &pooled)?;
    println!("record features rows={} cols={} output={}", pooled.rows(), pooled.cols(), args.output.display());
    Ok(())
}

fn collapse(args: CollapseArgs) -> CliResult<()> {
    let config_line = emit_config(format!(
        "config subcommand=collapse model={} seed=none output={}",
        args.model.display(),
        args.output.display(),
    ));

    let file = load_model(&args.model)?;
    let ModelPayload::Network(net) = file.payload else {
        return Err(usage(format!(
            "{} holds a {}; collapse needs a network",
            args.model.display(),
            file.payload.describe()
        )));
    };
    let mut collapsed = 0usize;
    let mut layers = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        layers.push(match layer {
            Layer::Hope(h) => {
                collapsed += 1;
                Layer::Dense(h.collapse()?)
            }
            Layer::Dense(d) => Layer::Dense(d.clone()),
        });
    }
    let out = Network::new(layers, net.classifier.clone())?;
    println!("record collapse layers={} collapsed={}", out.layers.len(), collapsed);
    save_model(
        &ModelFile { payload: ModelPayload::Network(out), config: config_line, report: file.report },
        &args.output,
    )?;
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult<()> {
    emit_config(format!(
        "config subcommand=eval model={} images={} features={} labels={} limit={} seed=none",
        args.model.display(),
        opt_path(&args.images),
        opt_path(&args.features),
        args.labels.display(),
        args.limit,
    ));

    let file = load_model(&args.model)?;
    let ModelPayload::Network(net) = file.payload else {
        return Err(usage(format!(
            "{} holds a {}; eval needs a network",
            args.model.display(),
            file.payload.describe()
        )));
    };
    let (x, y) =
        load_labeled(args.images.as_deref(), args.features.as_deref(), &args.labels, args.limit)?;
    let classes = net.classes();
    if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
        return Err(usage(format!("label {bad} out of range for {classes} classes")));
    }
    let predictions = net.predict(&x)?;
    let mut confusion = vec![0usize; classes * classes];
    for (&truth, &pred) in y.iter().zip(&predictions) {
        confusion[truth * classes + pred] += 1;
    }
    for truth in 0..classes {
        let row: Vec<String> =
            confusion[truth * classes..(truth + 1) * classes].iter().map(|c| c.to_string()).collect();
        println!("record confusion true={} counts={}", truth, row.join(","));
    }
    let errors: usize =
        y.iter().zip(&predictions).filter(|(truth, pred)| truth != pred).count();
    let error_rate = errors as f64 / y.len() as f64;
    println!("record eval total={} errors={} error_rate={:?}", y.len(), errors, error_rate);
    Ok(())
}

fn report(args: ReportArgs) -> CliResult<()> {
    emit_config(format!("config subcommand=report model={} seed=none", args.model.display()));
    let file = load_model(&args.model)?;
    println!("record payload={}", file.payload.describe());
    if !file.config.is_empty() {
        println!("{}", file.config);
    }
    for line in &file.report {
        println!("{line}");
    }
    Ok(())
}
