//! Command-line pipeline for activity-class discovery from event logs:
//! synthetic data generation, dominant-set clustering, motif extraction,
//! classification, and report emission. All machine-readable output goes
//! to files; diagnostics go to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use streamclique::io::{export, ingest, ingest_with, write_vocabulary, IngestError};
use streamclique::pipeline::{
    classify_dataset, models_from_file, models_to_file, motifs_file, run_discovery, run_motifs,
    run_report, ClassesFile, ModelsFile,
};
use streamclique::render::render_similarity_image;
use streamclique::synth::{generate, GroundTruth, SyntheticSpec};
use streamclique::{Dataset, PipelineConfig};

#[derive(Debug, Parser)]
#[command(
    name = "streamclique",
    about = "Discover and characterize activity classes in discrete event-streams",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic event log with planted classes and motifs.
    Generate(GenerateArgs),
    /// Cluster activities into classes via dominant-set peeling.
    Discover(DiscoverArgs),
    /// Learn per-class models and extract ranked event motifs.
    Motifs(MotifsArgs),
    /// Score activities against saved models.
    Classify(ClassifyArgs),
    /// Run the full pipeline and emit a self-contained report.
    Report(ReportArgs),
}

/// Flags shared by every pipeline stage; mirror the config file fields.
/// Explicit flags win over the config file, which wins over defaults.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config file with the same fields as the flags below.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// n-gram width.
    #[arg(long)]
    n: Option<usize>,
    /// Motif prune parameter K.
    #[arg(long = "prune-k")]
    prune_k: Option<f64>,
    /// Maximum context depth of the class models.
    #[arg(long = "max-depth")]
    max_depth: Option<usize>,
    /// Smallest class the peeling may emit.
    #[arg(long = "min-clique-size")]
    min_clique_size: Option<usize>,
    /// Replicator convergence threshold (L1).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Replicator iteration cap.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Converged-support membership threshold.
    #[arg(long = "support-threshold")]
    support_threshold: Option<f64>,
    /// Additive smoothing for likelihood scoring.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Run seed; falls back to STREAMCLIQUE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, AppError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| AppError::data(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| AppError::data(format!("bad config {}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(n) = self.n {
            config.n = n;
        }
        if let Some(k) = self.prune_k {
            config.k_param = k;
        }
        if let Some(d) = self.max_depth {
            config.max_depth = d;
        }
        if let Some(m) = self.min_clique_size {
            config.min_clique_size = m;
        }
        if let Some(e) = self.epsilon {
            config.epsilon = e;
        }
        if let Some(i) = self.max_iters {
            config.max_iters = i;
        }
        if let Some(t) = self.support_threshold {
            config.support_threshold = t;
        }
        if let Some(s) = self.smoothing {
            config.smoothing = s;
        }
        config.seed = self.seed.or_else(env_seed).unwrap_or(config.seed);
        config
            .validate()
            .map_err(|e| AppError::Usage(e.to_string()))?;
        Ok(config)
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("STREAMCLIQUE_SEED").ok()?.parse().ok()
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Number of distinct event names.
    #[arg(long = "vocab-size", default_value_t = 12)]
    vocab_size: usize,
    /// Number of planted classes.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Instances generated per class.
    #[arg(long = "instances-per-class", default_value_t = 30)]
    instances_per_class: usize,
    /// Events per activity.
    #[arg(long, default_value_t = 50)]
    length: usize,
    #[arg(long = "motifs-per-class", default_value_t = 1)]
    motifs_per_class: usize,
    #[arg(long = "motif-length", default_value_t = 5)]
    motif_length: usize,
    /// Fraction of each activity that is background noise.
    #[arg(long = "noise-rate", default_value_t = 0.3)]
    noise_rate: f64,
    /// Extra activities of pure background noise.
    #[arg(long = "noise-instances", default_value_t = 0)]
    noise_instances: usize,
    /// Generation seed; falls back to STREAMCLIQUE_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Event-log output path (JSON lines).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Vocabulary file output path.
    #[arg(long = "vocab-out", value_name = "FILE")]
    vocab_out: Option<PathBuf>,
    /// Ground-truth output path (labels, planted motifs, spec).
    #[arg(long = "truth-out", value_name = "FILE")]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiscoverArgs {
    /// Event log (JSON lines).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Vocabulary file; induced from the log when absent.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Directory for clusters.json and the similarity images.
    #[arg(long = "out-dir", value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct MotifsArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// clusters.json from the discover stage.
    #[arg(long, value_name = "FILE")]
    clusters: PathBuf,
    /// Directory for motifs.json and models.json.
    #[arg(long = "out-dir", value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Event log of activities to classify.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// models.json from the motifs stage.
    #[arg(long, value_name = "FILE")]
    models: PathBuf,
    /// Additive smoothing for scoring.
    #[arg(long, default_value_t = 0.5)]
    smoothing: f64,
    /// Output path for classification.json.
    #[arg(long, value_name = "FILE", default_value = "classification.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Ground-truth file from generate; enables the planted comparison.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Directory for report.json.
    #[arg(long = "out-dir", value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

/// Exit 1 for usage problems, 2 for data problems.
#[derive(Debug)]
enum AppError {
    Usage(String),
    Data(String),
}

impl AppError {
    fn data(message: impl Into<String>) -> Self {
        AppError::Data(message.into())
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(m) | AppError::Data(m) => write!(f, "{m}"),
        }
    }
}

impl<E: std::error::Error> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/usage text; --help and --version
            // are successful exits.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(AppError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Discover(args) => cmd_discover(args),
        Command::Motifs(args) => cmd_motifs(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::data(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| AppError::data(format!("bad JSON in {}: {e}", path.display())))
}

fn load_dataset(input: &Path, vocab: Option<&Path>) -> Result<Dataset, AppError> {
    let dataset = ingest(input, vocab)?;
    let violations = streamclique::event::validate(&dataset);
    if !violations.is_empty() {
        let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(AppError::data(format!(
            "invalid dataset: {}",
            lines.join("; ")
        )));
    }
    Ok(dataset)
}

fn cmd_generate(args: GenerateArgs) -> Result<(), AppError> {
    let spec = SyntheticSpec {
        vocab_size: args.vocab_size,
        num_classes: args.classes,
        instances_per_class: args.instances_per_class,
        sequence_length: args.length,
        motifs_per_class: args.motifs_per_class,
        motif_length: args.motif_length,
        noise_rate: args.noise_rate,
        noise_instances: args.noise_instances,
        seed: args.seed.or_else(env_seed).unwrap_or(0),
    };
    let (dataset, truth) = generate(&spec)?;
    export(&args.out, &dataset)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", args.out.display())))?;
    if let Some(path) = &args.vocab_out {
        write_vocabulary(path, &dataset.vocabulary)
            .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &args.truth_out {
        write_json(path, &truth)?;
    }
    info!(
        "generated {} activities over {} events into {}",
        dataset.activities.len(),
        dataset.vocabulary.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_discover(args: DiscoverArgs) -> Result<(), AppError> {
    let config = args.config.resolve()?;
    let dataset = load_dataset(&args.input, args.vocab.as_deref())?;
    let discovery = run_discovery(&dataset, &config)?;
    let classes = discovery.to_classes_file(&dataset);
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| AppError::data(format!("cannot create {}: {e}", args.out_dir.display())))?;
    write_json(&args.out_dir.join("clusters.json"), &classes)?;

    let plain = render_similarity_image(&discovery.matrix, None)?;
    fs::write(args.out_dir.join("similarity.pgm"), plain)
        .map_err(|e| AppError::data(format!("cannot write similarity.pgm: {e}")))?;
    let ordering = discovery.sorted_ordering();
    let sorted = render_similarity_image(&discovery.matrix, Some(&ordering))?;
    fs::write(args.out_dir.join("similarity_sorted.pgm"), sorted)
        .map_err(|e| AppError::data(format!("cannot write similarity_sorted.pgm: {e}")))?;
    info!(
        "discovered {} classes, {} leftover",
        classes.classes.len(),
        classes.leftover.len()
    );
    Ok(())
}

fn cmd_motifs(args: MotifsArgs) -> Result<(), AppError> {
    let config = args.config.resolve()?;
    let dataset = load_dataset(&args.input, args.vocab.as_deref())?;
    let classes: ClassesFile = read_json(&args.clusters)?;
    let outcome = run_motifs(&dataset, &classes, &config)?;
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| AppError::data(format!("cannot create {}: {e}", args.out_dir.display())))?;
    write_json(
        &args.out_dir.join("motifs.json"),
        &motifs_file(&outcome.models, &dataset.vocabulary),
    )?;
    write_json(
        &args.out_dir.join("models.json"),
        &models_to_file(&outcome.models, &dataset.vocabulary),
    )?;
    info!("learned {} class models", outcome.models.len());
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), AppError> {
    let file: ModelsFile = read_json(&args.models)?;
    let (vocabulary, models) = models_from_file(&file)?;
    if models.is_empty() {
        return Err(AppError::data("models file contains no classes"));
    }
    // Ingesting against the model vocabulary surfaces any mismatch.
    let dataset = ingest_with(&args.input, Some(vocabulary)).map_err(|e| match e {
        IngestError::UnknownEvent { line, name } => AppError::data(format!(
            "vocabulary mismatch: line {line} event {name:?} is not in the model vocabulary"
        )),
        other => AppError::from(other),
    })?;
    let classification = classify_dataset(&dataset, &models, args.smoothing);
    write_json(&args.out, &classification)?;
    info!(
        "classified {} activities into {}",
        classification.results.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), AppError> {
    let config = args.config.resolve()?;
    let dataset = load_dataset(&args.input, args.vocab.as_deref())?;
    let truth: Option<GroundTruth> = match &args.truth {
        Some(path) => Some(read_json(path)?),
        None => None,
    };
    let (mut report, _, _) = run_report(&dataset, &config, truth.as_ref())?;
    report.synthetic_spec = truth.map(|t| t.spec);
    fs::create_dir_all(&args.out_dir)
        .map_err(|e| AppError::data(format!("cannot create {}: {e}", args.out_dir.display())))?;
    write_json(&args.out_dir.join("report.json"), &report)?;
    if let Some(gt) = &report.ground_truth {
        info!(
            "purity {:.3}, motif recall {:.3}, leftover matches noise: {}",
            gt.purity, gt.motif_recall, gt.leftover_matches_noise
        );
    }
    Ok(())
}
