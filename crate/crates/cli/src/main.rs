//! Command-line surface of the pipeline: dataset preparation (`pca`),
//! training, evaluation, robustness sweeps (`attack`) and embedding dumps.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed dataset/model files), 3 training divergence.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qmetric_core::adversarial::{AttackConfig, AttackMode};
use qmetric_core::data::{
    fit_pca, fit_scaling, load_iris_csv, load_mnist_idx, pca_transform, scale_to_angles, Dataset,
    DatasetCache,
};
use qmetric_core::encoding::FeatureVector;
use qmetric_core::model::{embed, ModelFile};
use qmetric_core::train::{
    evaluate, robust_accuracy, train, EpochKind, EvalModeConfig, TrainConfig,
};
use qmetric_core::Error;

#[derive(Parser)]
#[command(
    name = "qmetric",
    version,
    about = "Quantum triplet-metric learning on a statevector simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit PCA and angle scaling on a training split and cache both splits.
    Pca(PcaArgs),
    /// Train a metric model on cached datasets.
    Train(TrainArgs),
    /// Evaluate a saved model on a cached dataset.
    Eval(EvalArgs),
    /// Robust-accuracy sweep over one or more attack budgets.
    Attack(AttackArgs),
    /// Dump embedded statevector amplitudes of selected rows as CSV.
    Embed(EmbedArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetKind {
    Iris,
    Mnist,
}

#[derive(Args)]
struct PcaArgs {
    /// Source format.
    #[arg(long, value_enum)]
    dataset: DatasetKind,
    /// Iris CSV path (iris only; split internally via --train-count).
    #[arg(long)]
    input: Option<PathBuf>,
    /// MNIST training images file (mnist only).
    #[arg(long)]
    images: Option<PathBuf>,
    /// MNIST training labels file (mnist only).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// MNIST held-out images file (mnist only).
    #[arg(long)]
    test_images: Option<PathBuf>,
    /// MNIST held-out labels file (mnist only).
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Keep only these labels (comma-separated); default keeps all.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<u32>,
    /// PCA target dimension; defaults to 4 for iris and 8 for mnist.
    #[arg(long)]
    k: Option<usize>,
    /// Rows assigned to the training split (iris only).
    #[arg(long, default_value_t = 100)]
    train_count: usize,
    /// Seed for the iris train/test split.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Training-split cache output path.
    #[arg(long)]
    out_train: PathBuf,
    /// Held-out-split cache output path.
    #[arg(long)]
    out_test: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training-split cache produced by `pca`.
    #[arg(long)]
    data: PathBuf,
    /// Validation-split cache for the per-epoch metrics.
    #[arg(long)]
    val: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Metrics log JSON output path.
    #[arg(long)]
    out: PathBuf,
    /// Trained model JSON output path.
    #[arg(long)]
    model_out: PathBuf,
}

/// Base config file plus the per-flag overrides; flags win.
#[derive(Args)]
struct ConfigArgs {
    /// Config JSON; absent fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    /// Attack step size.
    #[arg(long)]
    lambda: Option<f64>,
    /// Attack budget (max-norm bound on the angle offsets).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Estimate readouts from this many sampled shots instead of exactly.
    #[arg(long)]
    shots: Option<usize>,
    /// Alternate natural and adversarial epochs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    adversarial: Option<bool>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model JSON produced by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset cache to evaluate on.
    #[arg(long)]
    data: PathBuf,
    /// Number of seeded evaluation triplets.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Estimate readouts from this many sampled shots instead of exactly.
    #[arg(long)]
    shots: Option<usize>,
    /// Optional JSON output of the metrics record.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Model JSON produced by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset cache to attack on.
    #[arg(long)]
    data: PathBuf,
    /// Attack budget; repeat the flag for a sweep.
    #[arg(long = "epsilon", required = true)]
    epsilons: Vec<f64>,
    /// Attack step size.
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// PGD iterations per triplet.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Number of seeded triplets per sweep entry.
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Optional JSON output of the sweep.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    /// Model JSON produced by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset cache holding the rows to embed.
    #[arg(long)]
    data: PathBuf,
    /// Row indices (comma-separated); default embeds every row.
    #[arg(long, value_delimiter = ',')]
    rows: Vec<usize>,
    /// CSV output path: row index, label, then 2^d amplitude columns.
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::Core(err)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(err) => write!(f, "{err}"),
        }
    }
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            // Bad values in an otherwise readable config are usage errors;
            // everything else from the core is a data problem except an
            // explicit divergence.
            CliError::Core(Error::InvalidValue { .. }) | CliError::Core(Error::ZeroShots) => 1,
            CliError::Core(Error::Divergence { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Pca(args) => run_pca(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Attack(args) => run_attack(args),
        Command::Embed(args) => run_embed(args),
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)
                .map_err(|err| CliError::usage(format!("--config {}: {err}", path.display())))?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.epochs = epochs;
        }
        if let Some(margin) = self.margin {
            cfg.margin = margin;
        }
        if let Some(lambda) = self.lambda {
            cfg.attack.lambda = lambda;
        }
        if let Some(epsilon) = self.epsilon {
            cfg.attack.epsilon = epsilon;
        }
        if let Some(count) = self.shots {
            cfg.eval_mode = EvalModeConfig::Shots { count };
        }
        if let Some(adversarial) = self.adversarial {
            cfg.adversarial = adversarial;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn require(path: &Option<PathBuf>, flag: &str, kind: &str) -> Result<PathBuf, CliError> {
    path.clone()
        .ok_or_else(|| CliError::usage(format!("{flag} is required for --dataset {kind}")))
}

fn keep_classes(ds: Dataset, classes: &[u32]) -> Result<Dataset, CliError> {
    if classes.is_empty() {
        Ok(ds)
    } else {
        Ok(ds.filter_labels(classes)?)
    }
}

fn run_pca(args: PcaArgs) -> Result<(), CliError> {
    let (train_raw, test_raw, default_k) = match args.dataset {
        DatasetKind::Iris => {
            let input = require(&args.input, "--input", "iris")?;
            let full = keep_classes(load_iris_csv(&input)?, &args.classes)?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let (train, test) = full.split(args.train_count, &mut rng)?;
            (train, test, 4)
        }
        DatasetKind::Mnist => {
            let images = require(&args.images, "--images", "mnist")?;
            let labels = require(&args.labels, "--labels", "mnist")?;
            let test_images = require(&args.test_images, "--test-images", "mnist")?;
            let test_labels = require(&args.test_labels, "--test-labels", "mnist")?;
            let train = keep_classes(load_mnist_idx(&images, &labels)?, &args.classes)?;
            let test = keep_classes(load_mnist_idx(&test_images, &test_labels)?, &args.classes)?;
            (train, test, 8)
        }
    };
    let k = args.k.unwrap_or(default_k);
    let pca = fit_pca(&train_raw.features, k)?;
    let scaling = {
        let train_proj = pca_transform(&pca, &train_raw.features)?;
        fit_scaling(&train_proj)?
    };
    let save = |raw: &Dataset, suffix: &str, path: &PathBuf| -> Result<usize, CliError> {
        let projected = pca_transform(&pca, &raw.features)?;
        let cache = DatasetCache {
            name: format!("{}-{suffix}", raw.name),
            k,
            pca: pca.clone(),
            scaling: scaling.clone(),
            features: scale_to_angles(&scaling, &projected)?,
            labels: raw.labels.clone(),
        };
        cache.save(path)?;
        Ok(cache.features.len())
    };
    let train_rows = save(&train_raw, "train", &args.out_train)?;
    let test_rows = save(&test_raw, "test", &args.out_test)?;
    let variance: f64 = pca.explained_variance.iter().sum();
    println!(
        "cached {train_rows} training and {test_rows} held-out rows at k={k} \
         (explained variance {variance:.4})"
    );
    println!("train cache: {}", args.out_train.display());
    println!("test cache:  {}", args.out_test.display());
    Ok(())
}

fn kind_name(kind: EpochKind) -> &'static str {
    match kind {
        EpochKind::Natural => "natural",
        EpochKind::Adversarial => "adversarial",
    }
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    // Resolve the config first so usage errors beat data errors.
    let cfg = args.config.resolve()?;
    let train_cache = DatasetCache::load(&args.data)?;
    let val_cache = DatasetCache::load(&args.val)?;
    let train_ds = train_cache.dataset()?;
    let val_ds = val_cache.dataset()?;
    let (model, log) = train(&cfg, &train_ds, &val_ds)?;
    log.save(&args.out)?;
    ModelFile::build(&model, &train_cache.scaling, cfg.seed).save(&args.model_out)?;
    for record in &log.epochs {
        let adv = record
            .loss_adversarial
            .map(|loss| format!(" adv_loss {loss:.4}"))
            .unwrap_or_default();
        println!(
            "epoch {:>4} ({:<11}) loss {:.4}{adv} | val d_p {:.3} d_n {:.3} ordering {:.3} margin {:.3}",
            record.epoch,
            kind_name(record.kind),
            record.loss_natural,
            record.mean_d_p,
            record.mean_d_n,
            record.ordering_accuracy,
            record.margin_accuracy,
        );
    }
    if let Some(last) = log.epochs.last() {
        println!(
            "trained {} epochs: final loss {:.4}, best loss {:.4}, val ordering {:.3}",
            log.epochs.len(),
            last.loss_natural,
            last.best_loss_natural,
            last.ordering_accuracy,
        );
    }
    println!("metrics: {}", args.out.display());
    println!("model:   {}", args.model_out.display());
    Ok(())
}

fn shots_mode(shots: Option<usize>) -> Result<EvalModeConfig, CliError> {
    match shots {
        None => Ok(EvalModeConfig::Exact),
        Some(0) => Err(CliError::usage("--shots must be at least 1")),
        Some(count) => Ok(EvalModeConfig::Shots { count }),
    }
}

fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    let mode = shots_mode(args.shots)?;
    let (model, _scaling) = ModelFile::load(&args.model)?.instantiate()?;
    let ds = DatasetCache::load(&args.data)?.dataset()?;
    let record = evaluate(&model, &ds, args.count, args.seed, mode)?;
    println!(
        "{} triplets (seed {}): mean d_p {:.4}, mean d_n {:.4}, ordering {:.4}, margin {:.4}",
        args.count,
        args.seed,
        record.mean_d_p,
        record.mean_d_n,
        record.ordering_accuracy,
        record.margin_accuracy,
    );
    if let Some(out) = &args.out {
        let text = serde_json::to_string_pretty(&record).map_err(Error::from)?;
        std::fs::write(out, text).map_err(|source| Error::Io {
            path: out.clone(),
            source,
        })?;
        println!("record: {}", out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepEntry {
    epsilon: f64,
    robust_accuracy: f64,
}

#[derive(Serialize)]
struct SweepReport {
    ordering_accuracy: f64,
    lambda: f64,
    steps: usize,
    count: usize,
    seed: u64,
    sweep: Vec<SweepEntry>,
}

fn run_attack(args: AttackArgs) -> Result<(), CliError> {
    let (model, _scaling) = ModelFile::load(&args.model)?.instantiate()?;
    let ds = DatasetCache::load(&args.data)?.dataset()?;
    let baseline = evaluate(&model, &ds, args.count, args.seed, EvalModeConfig::Exact)?;
    println!(
        "clean ordering accuracy {:.4} over {} triplets (seed {})",
        baseline.ordering_accuracy, args.count, args.seed
    );
    let mut sweep = Vec::with_capacity(args.epsilons.len());
    for &epsilon in &args.epsilons {
        let cfg = AttackConfig {
            lambda: args.lambda,
            epsilon,
            steps: args.steps,
            mode: AttackMode::Pgd,
        };
        let robust = robust_accuracy(&model, &ds, &cfg, args.count, args.seed)?;
        println!("epsilon {epsilon:.4}: robust accuracy {robust:.4}");
        sweep.push(SweepEntry {
            epsilon,
            robust_accuracy: robust,
        });
    }
    if let Some(out) = &args.out {
        let report = SweepReport {
            ordering_accuracy: baseline.ordering_accuracy,
            lambda: args.lambda,
            steps: args.steps,
            count: args.count,
            seed: args.seed,
            sweep,
        };
        let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
        std::fs::write(out, text).map_err(|source| Error::Io {
            path: out.clone(),
            source,
        })?;
        println!("sweep: {}", out.display());
    }
    Ok(())
}

fn run_embed(args: EmbedArgs) -> Result<(), CliError> {
    let (model, _scaling) = ModelFile::load(&args.model)?.instantiate()?;
    let ds = DatasetCache::load(&args.data)?.dataset()?;
    let rows: Vec<usize> = if args.rows.is_empty() {
        (0..ds.len()).collect()
    } else {
        args.rows.clone()
    };
    if let Some(&bad) = rows.iter().find(|&&row| row >= ds.len()) {
        return Err(CliError::usage(format!(
            "--rows {bad} out of range for {} rows",
            ds.len()
        )));
    }
    let dim = 1usize << model.ansatz.num_data_qubits;
    let mut out = String::new();
    out.push_str("row,label");
    for i in 0..dim {
        out.push_str(&format!(",amp_{i}"));
    }
    out.push('\n');
    for &row in &rows {
        let x = FeatureVector::new(ds.features[row].clone())?;
        let state = embed(&x, &model)?;
        // The embedding is all-real by construction; a violation here means
        // the dump would silently drop information, so it is an error.
        if let Some(bad) = state.amps().iter().find(|amp| amp.im.abs() >= 1e-12) {
            return Err(CliError::Core(Error::InvalidValue {
                what: "embedding amplitude",
                why: format!("imaginary part {} exceeds 1e-12", bad.im),
            }));
        }
        out.push_str(&format!("{row},{}", ds.labels[row]));
        for amp in state.amps() {
            out.push_str(&format!(",{}", amp.re));
        }
        out.push('\n');
    }
    std::fs::write(&args.out, out).map_err(|source| Error::Io {
        path: args.out.clone(),
        source,
    })?;
    println!(
        "wrote {} embeddings of dimension {dim} to {}",
        rows.len(),
        args.out.display()
    );
    Ok(())
}
