//! Command-line front end. `main` only maps [`run`]'s result to an exit code.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use annobias_core::divergence::{DeltaForm, PredictionSet};
use annobias_core::eval::{self, Averaging};
use annobias_core::learn::{Predictor, TrainConfig};
use annobias_core::metadata::{GapLevel, LogBase};
use annobias_core::text::PreprocessConfig;
use annobias_core::wel::{self, BiasComponent, DebiasConfig, HoldoutSpec, ScoreMetric, SingleTarget, WeightScheme, WelEnsemble, WelSettings};
use annobias_core::{AnnotatedDataset, LabelId, Split, TieBreak};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{self, AgreementMetric};
use crate::error::IngestError;
use crate::format::{self, Format, LoadOptions, LoadedDataset, Preprocessing};
use crate::preset::Preset;
use crate::report::Report;
use crate::{io, persist, predictions, profiles, train};

pub const EXIT_WARNINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "annobias", version, about = "Annotation-bias analytics for multi-annotator NLP datasets")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Input format; inferred from the file extension when absent.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Corpus preset: armis, convabuse, hsbrexit or mdagreement.
    #[arg(long, global = true, value_parser = parse_preset)]
    pub preset: Option<&'static Preset>,
    /// Text preprocessing at load time.
    #[arg(long, global = true, value_enum, default_value_t = PreprocessArg::Auto)]
    pub preprocess: PreprocessArg,
    /// Exit with status 1 when the report carries warnings.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output path: the report, or the artifact for `wel train|predict` and
    /// `ingest convert`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for training.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PreprocessArg {
    /// The preset's steps; none without a preset.
    Auto,
    Off,
    /// Every step except non-ASCII removal.
    Default,
    All,
}

fn parse_preset(s: &str) -> Result<&'static Preset, String> {
    Preset::by_name(s).ok_or_else(|| format!("unknown preset `{s}` (known: {})", Preset::names().collect::<Vec<_>>().join(", ")))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cohen's kappa, Fleiss' kappa and Krippendorff's alpha.
    Agreement(AgreementArgs),
    /// Disagreement rate, model-human delta, multilingual disagreement.
    Divergence(DivergenceArgs),
    /// Demographic gap, cultural distance, pool entropy, iteration variance.
    Metadata(MetadataArgs),
    /// Weak ensemble learning.
    #[command(subcommand)]
    Wel(WelCommand),
    /// Validate or convert dataset files.
    #[command(subcommand)]
    Ingest(IngestCommand),
    /// Combined dataset audit.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset files, concatenated in order.
    #[arg(required = true)]
    pub data: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Metrics to compute; all when absent.
    #[arg(long = "metric", value_enum)]
    pub metrics: Vec<AgreementMetric>,
    /// Annotator pair for Cohen's kappa, `a,b`; defaults to the pair sharing
    /// the most instances.
    #[arg(long, value_parser = parse_pair)]
    pub pair: Option<(String, String)>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && a != b => Ok((a.into(), b.into())),
        _ => Err("expected two distinct annotators as `a,b`".into()),
    }
}

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    /// Dataset for the model-human delta and to fix the instance set.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// First prediction file.
    #[arg(long)]
    pub preds: PathBuf,
    /// Second prediction file, for disagreement rates.
    #[arg(long)]
    pub preds_b: Option<PathBuf>,
    /// CSV `first,second` aligning ids across languages.
    #[arg(long, requires = "preds_b")]
    pub pairing: Option<PathBuf>,
    /// Measure the delta on one class probability instead of the vector.
    #[arg(long)]
    pub class: Option<String>,
}

#[derive(Debug, Args)]
pub struct MetadataArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// CSV `annotator_id,dimension,group`.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long, value_name = "DIMENSION")]
    pub gap: Option<String>,
    #[arg(long, value_name = "DIMENSION")]
    pub cultural: Option<String>,
    #[arg(long, value_name = "DIMENSION")]
    pub entropy: Option<String>,
    #[arg(long)]
    pub iteration_variance: bool,
    /// JSON `[{"group", "vector"}]` overriding label-distribution embeddings.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Positive label for gaps; the dataset's default when absent.
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long, value_enum, default_value_t = LevelArg::Annotation)]
    pub level: LevelArg,
    #[arg(long, value_enum, default_value_t = BaseArg::E)]
    pub log_base: BaseArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Annotation,
    Aggregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    E,
    #[value(name = "2")]
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    F1,
    InvCe,
    InvMd,
    Softmax,
}

#[derive(Debug, Args)]
pub struct WelTrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::F1)]
    pub weight_scheme: SchemeArg,
    /// Softmax temperature.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub hash_dims: Option<u32>,
    /// Holdout share carved from train when there is no dev split.
    #[arg(long, default_value_t = 0.15)]
    pub holdout_fraction: f64,
}

#[derive(Debug, Args)]
pub struct DebiasArgs {
    /// Scale of the subtracted bias component; 0 disables debiasing.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// JSON bias: an array (global) or an object of id → array. Without it
    /// the bias is the mean prediction minus the mean soft label on the dev
    /// split.
    #[arg(long, requires = "lambda")]
    pub bias: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WelPredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Ensemble directory written by `wel train`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub debias: DebiasArgs,
}

#[derive(Debug, Args)]
pub struct WelEvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Split to score; the whole dataset when it has no such split.
    #[arg(long, default_value = "test", value_parser = parse_split_arg)]
    pub split: Split,
    /// Re-weight members under another scheme before scoring.
    #[arg(long, value_enum)]
    pub weight_scheme: Option<SchemeArg>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[command(flatten)]
    pub debias: DebiasArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Majority,
    Soft,
}

#[derive(Debug, Args)]
pub struct WelBaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TargetArg::Majority)]
    pub target: TargetArg,
    #[arg(long, default_value = "test", value_parser = parse_split_arg)]
    pub split: Split,
    /// Ensemble directory to compare against on the same split.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub hash_dims: Option<u32>,
}

fn parse_split_arg(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split `{s}`"))
}

#[derive(Debug, Subcommand)]
pub enum WelCommand {
    /// Train an ensemble into the `--out` directory.
    Train(WelTrainArgs),
    /// Write predictions as JSON Lines.
    Predict(WelPredictArgs),
    /// Score an ensemble on a split.
    Eval(WelEvalArgs),
    /// Train and score a single model on the WEL training split.
    Baseline(WelBaselineArgs),
}

#[derive(Debug, Subcommand)]
pub enum IngestCommand {
    /// Parse, validate and summarize dataset files.
    Validate(DataArgs),
    /// Rewrite dataset files as canonical JSON Lines to `--out`.
    Convert(DataArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run every dataset-level block that applies.
    #[arg(long)]
    pub all: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<annobias_core::Error> for Failure {
    fn from(e: annobias_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

/// What a successful run produced.
#[derive(Debug)]
pub struct Outcome {
    /// Text for stdout, if not written to `--out`.
    pub stdout: Option<String>,
    pub warnings: usize,
}

/// Runs one invocation; `args` excludes the program name.
pub fn run(cli: Cli, args: Vec<String>) -> CliResult<Outcome> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    match &cli.command {
        Command::Agreement(a) => emit(g, cmd_agreement(g, a, args)?),
        Command::Divergence(a) => emit(g, cmd_divergence(g, a, args)?),
        Command::Metadata(a) => emit(g, cmd_metadata(g, a, args)?),
        Command::Report(a) => emit(g, cmd_report(g, a, args)?),
        Command::Ingest(IngestCommand::Validate(a)) => emit(g, cmd_validate(g, a, args)?),
        Command::Ingest(IngestCommand::Convert(a)) => {
            let out = g.out.as_deref().ok_or_else(|| Failure::Usage("ingest convert needs --out".into()))?;
            print_report(cmd_convert(g, a, out, args)?)
        }
        Command::Wel(WelCommand::Train(a)) => {
            let out = g.out.as_deref().ok_or_else(|| Failure::Usage("wel train needs --out DIR".into()))?;
            print_report(cmd_wel_train(g, a, out, args)?)
        }
        Command::Wel(WelCommand::Predict(a)) => {
            let (text, warnings) = cmd_wel_predict(g, a)?;
            match &g.out {
                Some(path) => {
                    io::write_atomic(path, text.as_bytes()).map_err(|e| Failure::Internal(e.to_string()))?;
                    Ok(Outcome { stdout: None, warnings })
                }
                None => Ok(Outcome { stdout: Some(text), warnings }),
            }
        }
        Command::Wel(WelCommand::Eval(a)) => emit(g, cmd_wel_eval(g, a, args)?),
        Command::Wel(WelCommand::Baseline(a)) => emit(g, cmd_wel_baseline(g, a, args)?),
    }
}

fn emit(g: &Global, report: Report) -> CliResult<Outcome> {
    let text = report.to_json();
    let warnings = report.warnings.len();
    match &g.out {
        Some(path) => {
            io::write_atomic(path, text.as_bytes()).map_err(|e| Failure::Internal(e.to_string()))?;
            Ok(Outcome { stdout: None, warnings })
        }
        None => Ok(Outcome { stdout: Some(text), warnings }),
    }
}

fn print_report(report: Report) -> CliResult<Outcome> {
    Ok(Outcome { warnings: report.warnings.len(), stdout: Some(report.to_json()) })
}

fn load(g: &Global, paths: &[PathBuf]) -> CliResult<LoadedDataset> {
    let preprocessing = match g.preprocess {
        PreprocessArg::Auto => Preprocessing::Auto,
        PreprocessArg::Off => Preprocessing::Off,
        PreprocessArg::Default => Preprocessing::Custom(PreprocessConfig::default()),
        PreprocessArg::All => Preprocessing::Custom(PreprocessConfig::ALL),
    };
    let options = LoadOptions { format: g.format, preset: g.preset, preprocessing };
    Ok(format::load(paths, &options)?)
}

fn start(command: &str, args: Vec<String>, loaded: &LoadedDataset) -> Report {
    let mut report = Report::new(command, args);
    report.dataset_fingerprint = Some(loaded.fingerprint.clone());
    report.warnings.extend(loaded.warnings.iter().cloned());
    report
}

fn label_id(ds: &AnnotatedDataset, name: &str) -> CliResult<LabelId> {
    ds.label_set().id_of(name).map_err(|_| {
        Failure::Usage(format!("unknown label `{name}` (labels: {})", ds.label_set().labels().join(", ")))
    })
}

fn cmd_agreement(g: &Global, a: &AgreementArgs, args: Vec<String>) -> CliResult<Report> {
    let loaded = load(g, &a.data.data)?;
    let mut report = start("agreement", args, &loaded);
    let metrics: BTreeSet<AgreementMetric> = if a.metrics.is_empty() {
        [AgreementMetric::Cohen, AgreementMetric::Fleiss, AgreementMetric::Krippendorff].into_iter().collect()
    } else {
        a.metrics.iter().copied().collect()
    };
    let lenient = a.metrics.is_empty();
    let pair = a.pair.as_ref().map(|(x, y)| (x.as_str(), y.as_str()));
    analysis::agreement(&mut report, &loaded.dataset, &metrics, pair, lenient)?;
    Ok(report)
}

fn load_pairing(path: &Path) -> CliResult<Vec<(String, String)>> {
    let bytes = io::read(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| IngestError::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        match (row.get(0), row.get(1)) {
            (Some(x), Some(y)) if !x.is_empty() && !y.is_empty() => out.push((x.to_string(), y.to_string())),
            _ => {
                let line = row.position().map_or(0, |p| p.line() as usize);
                return Err(IngestError::parse(path, line, "expected two ids").into());
            }
        }
    }
    Ok(out)
}

fn cmd_divergence(g: &Global, a: &DivergenceArgs, args: Vec<String>) -> CliResult<Report> {
    let first = predictions::load_predictions(&a.preds)?;
    let second = a.preds_b.as_deref().map(predictions::load_predictions).transpose()?;
    let loaded = if a.data.is_empty() { None } else { Some(load(g, &a.data)?) };
    let mut report = match &loaded {
        Some(l) => start("divergence", args, l),
        None => Report::new("divergence", args),
    };
    let labels: Vec<String> = match &loaded {
        Some(l) => l.dataset.label_set().labels().to_vec(),
        None => (0..first.width()?.unwrap_or(0)).map(|i| i.to_string()).collect(),
    };
    if let Some(second) = &second {
        if let Some(path) = &a.pairing {
            let pairing = load_pairing(path)?;
            analysis::add(&mut report, analysis::MULTILINGUAL, false, analysis::multilingual(&first, second, &pairing, &labels))?;
        } else {
            let ids = loaded.as_ref().map(|l| l.dataset.id_set());
            analysis::add(&mut report, analysis::RATE, false, analysis::rate(&first, second, ids.as_ref(), &labels))?;
        }
    }
    if let Some(l) = &loaded {
        let form = match &a.class {
            Some(c) => DeltaForm::Class(label_id(&l.dataset, c)?),
            None => DeltaForm::Vector,
        };
        analysis::add(&mut report, analysis::DELTA, false, analysis::delta(&first, &l.dataset, form))?;
        if let Some(second) = &second {
            if a.pairing.is_none() {
                let name = format!("{}_b", analysis::DELTA);
                analysis::add(&mut report, &name, false, analysis::delta(second, &l.dataset, form))?;
            }
        }
    }
    if report.blocks.is_empty() {
        return Err(Failure::Usage("divergence needs --preds-b or --data".into()));
    }
    Ok(report)
}

fn with_profiles(loaded: &mut LoadedDataset, path: Option<&Path>) -> CliResult<()> {
    if let Some(path) = path {
        let table = profiles::load_profiles(path)?;
        loaded.dataset = profiles::attach(&loaded.dataset, table, path)?;
    }
    Ok(())
}

fn cmd_metadata(g: &Global, a: &MetadataArgs, args: Vec<String>) -> CliResult<Report> {
    let mut loaded = load(g, &a.data.data)?;
    with_profiles(&mut loaded, a.profiles.as_deref())?;
    let ds = &loaded.dataset;
    let mut report = start("metadata", args, &loaded);
    let embeddings = a.embeddings.as_deref().map(profiles::load_embeddings).transpose()?;
    let level = match a.level {
        LevelArg::Annotation => GapLevel::Annotation,
        LevelArg::Aggregated => GapLevel::Aggregated,
    };
    let base = match a.log_base {
        BaseArg::E => LogBase::Natural,
        BaseArg::Two => LogBase::Two,
    };
    let positive = a.positive.as_deref().map(|p| label_id(ds, p)).transpose()?;
    let explicit = a.gap.is_some() || a.cultural.is_some() || a.entropy.is_some() || a.iteration_variance;
    if !explicit {
        let dims = analysis::dimensions(ds);
        analysis::per_dimension(&mut report, analysis::GAP, &dims, true, |d| analysis::gap(ds, d, positive, level))?;
        analysis::per_dimension(&mut report, analysis::CULTURAL, &dims, true, |d| analysis::cultural(ds, d, embeddings.as_ref()))?;
        analysis::per_dimension(&mut report, analysis::ENTROPY, &dims, true, |d| analysis::entropy(ds, d, base))?;
        if ds.is_iterative() {
            analysis::add(&mut report, analysis::ITERATION, true, analysis::iteration(ds))?;
        }
        return Ok(report);
    }
    let one = |d: &Option<String>| d.iter().cloned().collect::<Vec<_>>();
    analysis::per_dimension(&mut report, analysis::GAP, &one(&a.gap), false, |d| analysis::gap(ds, d, positive, level))?;
    analysis::per_dimension(&mut report, analysis::CULTURAL, &one(&a.cultural), false, |d| {
        analysis::cultural(ds, d, embeddings.as_ref())
    })?;
    analysis::per_dimension(&mut report, analysis::ENTROPY, &one(&a.entropy), false, |d| analysis::entropy(ds, d, base))?;
    if a.iteration_variance {
        analysis::add(&mut report, analysis::ITERATION, false, analysis::iteration(ds))?;
    }
    Ok(report)
}

fn cmd_report(g: &Global, a: &ReportArgs, args: Vec<String>) -> CliResult<Report> {
    if !a.all {
        return Err(Failure::Usage("report currently supports only --all".into()));
    }
    let mut loaded = load(g, &a.data.data)?;
    with_profiles(&mut loaded, a.profiles.as_deref())?;
    let embeddings = a.embeddings.as_deref().map(profiles::load_embeddings).transpose()?;
    let mut report = start("report", args, &loaded);
    report.block("dataset", analysis::describe(&loaded.dataset));
    let dims = analysis::dimensions(&loaded.dataset);
    analysis::audit(&mut report, &loaded.dataset, &dims, embeddings.as_ref())?;
    Ok(report)
}

fn cmd_validate(g: &Global, a: &DataArgs, args: Vec<String>) -> CliResult<Report> {
    let loaded = load(g, &a.data)?;
    let mut report = start("ingest validate", args, &loaded);
    report.block("dataset", analysis::describe(&loaded.dataset));
    report.exclude("dataset", loaded.dataset.unannotated_count());
    if let Some(p) = g.preset {
        let check = analysis::table_check(&loaded.dataset, p);
        if check["matches"] != json!(true) {
            report.warn(format!("split sizes or annotator counts differ from the published `{}` statistics", p.name));
        }
        report.block("table_check", check);
    }
    Ok(report)
}

fn cmd_convert(g: &Global, a: &DataArgs, out: &Path, args: Vec<String>) -> CliResult<Report> {
    let loaded = load(g, &a.data)?;
    let text = format::to_jsonl(&loaded.dataset, &loaded.extras);
    io::write_atomic(out, text.as_bytes()).map_err(|e| Failure::Internal(e.to_string()))?;
    let mut report = start("ingest convert", args, &loaded);
    report.block(
        "conversion",
        json!({
            "output": out.display().to_string(),
            "records": loaded.dataset.len(),
            "sha256": io::sha256_hex(text.as_bytes()),
        }),
    );
    Ok(report)
}

fn scheme(arg: SchemeArg, temperature: f64) -> WeightScheme {
    match arg {
        SchemeArg::F1 => WeightScheme::F1Proportional,
        SchemeArg::InvCe => WeightScheme::INV_CE,
        SchemeArg::InvMd => WeightScheme::INV_MD,
        SchemeArg::Softmax => WeightScheme::Softmax { metric: ScoreMetric::F1, temperature },
    }
}

fn train_config(seed: u64, epochs: Option<usize>, lr: Option<f64>, dims: Option<u32>) -> TrainConfig {
    let base = TrainConfig { seed, ..TrainConfig::default() };
    TrainConfig {
        epochs: epochs.unwrap_or(base.epochs),
        learning_rate: lr.unwrap_or(base.learning_rate),
        hash_dims: dims.unwrap_or(base.hash_dims),
        ..base
    }
}

fn eval_json(r: &eval::EvalReport) -> serde_json::Value {
    json!({ "f1": r.f1, "f1_undefined": r.f1_undefined, "ce": r.ce, "md": r.md, "n": r.n })
}

fn cmd_wel_train(g: &Global, a: &WelTrainArgs, out: &Path, args: Vec<String>) -> CliResult<Report> {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let loaded = load(g, &a.data.data)?;
    let ds = &loaded.dataset;
    let settings = WelSettings {
        k: a.k,
        master_seed: a.seed,
        train: train_config(a.seed, a.epochs, a.learning_rate, a.hash_dims),
        scheme: scheme(a.weight_scheme, a.temperature),
        holdout: HoldoutSpec::Auto { fraction: a.holdout_fraction, seed: a.seed },
        ..WelSettings::default()
    };
    settings.scheme.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (plan, ensemble) = train::train_wel_parallel(ds, &settings, g.threads)?;
    if !wel::weights_are_valid(&ensemble.weights) {
        return Err(Failure::Internal(format!("trained weights are not convex: {:?}", ensemble.weights)));
    }
    let manifest =
        persist::save_ensemble(out, &plan, &ensemble, &loaded.fingerprint).map_err(|e| Failure::Internal(e.to_string()))?;
    let mut report = start("wel train", args, &loaded);
    report.warnings.extend(ensemble.warnings.iter().cloned());
    report.block(
        analysis::WEL,
        json!({
            "k": a.k,
            "master_seed": a.seed,
            "scheme": ensemble.scheme,
            "weights": ensemble.weights,
            "holdout_scores": ensemble.holdout_scores.iter().map(eval_json).collect::<Vec<_>>(),
            "member_seeds": ensemble.member_seeds,
            "train_size": manifest.train_size,
            "holdout_size": manifest.holdout_size,
            "holdout_source": if ds.has_split(Split::Dev) { "dev" } else { "carve-out" },
            "output": out.display().to_string(),
        }),
    );
    report.exclude(analysis::WEL, plan.excluded);
    Ok(report)
}

fn predict_all(ensemble: &WelEnsemble, ds: &AnnotatedDataset) -> PredictionSet {
    wel::predict_dataset(ensemble, ds, "wel")
}

fn load_bias(path: &Path) -> CliResult<BiasComponent> {
    let bytes = io::read(path)?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| IngestError::parse(path, e.line(), e.to_string()))?;
    let bias = match value {
        serde_json::Value::Array(_) => BiasComponent::Global(
            serde_json::from_value(value).map_err(|e| IngestError::parse(path, 0, e.to_string()))?,
        ),
        serde_json::Value::Object(_) => BiasComponent::PerInstance(
            serde_json::from_value(value).map_err(|e| IngestError::parse(path, 0, e.to_string()))?,
        ),
        _ => return Err(IngestError::parse(path, 1, "bias must be an array or an object").into()),
    };
    Ok(bias)
}

/// The debias setting and a description of where `b(x)` came from.
fn debias_config(args: &DebiasArgs, ensemble: &WelEnsemble, ds: &AnnotatedDataset) -> CliResult<Option<(DebiasConfig, serde_json::Value)>> {
    let Some(lambda) = args.lambda else { return Ok(None) };
    let (bias, source) = match &args.bias {
        Some(path) => (load_bias(path)?, json!({ "source": "file", "path": path.display().to_string() })),
        None => {
            let dev = ds.split(Split::Dev).filter(|i| !i.annotations.is_empty());
            if dev.is_empty() {
                return Err(Failure::Usage("--lambda without --bias needs an annotated dev split".into()));
            }
            let v = wel::estimate_prior_bias(&predict_all(ensemble, &dev), &dev)?;
            (BiasComponent::Global(v.clone()), json!({ "source": "dev-prior", "vector": v }))
        }
    };
    let config = DebiasConfig::new(lambda, bias).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(Some((config, source)))
}

fn debias_set(preds: &PredictionSet, config: &DebiasConfig) -> CliResult<(PredictionSet, usize)> {
    let mut out = PredictionSet::new(format!("{}+debias", preds.model_id));
    out.language = preds.language.clone();
    let mut projected = 0;
    for (id, p) in &preds.outputs {
        let raw = wel::debias_raw(p.probs(), config, id)?;
        let d = wel::debias_output(p, config, id)?;
        if d.probs() != raw.as_slice() {
            projected += 1;
        }
        out.insert(id.clone(), d);
    }
    Ok((out, projected))
}

fn cmd_wel_predict(g: &Global, a: &WelPredictArgs) -> CliResult<(String, usize)> {
    let loaded = load(g, &a.data.data)?;
    let (_, ensemble) = persist::load_ensemble(&a.model)?;
    check_labels(&ensemble, &loaded.dataset)?;
    let mut preds = predict_all(&ensemble, &loaded.dataset);
    if let Some((config, _)) = debias_config(&a.debias, &ensemble, &loaded.dataset)? {
        preds = debias_set(&preds, &config)?.0;
    }
    if let Some(lang) = loaded.dataset.instances().first().map(|i| i.language.clone()) {
        if loaded.dataset.instances().iter().all(|i| i.language == lang) {
            preds.language = Some(lang);
        }
    }
    Ok((predictions::to_jsonl(&preds), 0))
}

fn check_labels(ensemble: &WelEnsemble, ds: &AnnotatedDataset) -> CliResult<()> {
    if ensemble.label_set != *ds.label_set() {
        return Err(Failure::Data(format!(
            "ensemble labels [{}] differ from dataset labels [{}]",
            ensemble.label_set.labels().join(", "),
            ds.label_set().labels().join(", ")
        )));
    }
    Ok(())
}

/// Annotated instances of `split`, or of the whole dataset if the split is
/// absent.
fn scoring_set(ds: &AnnotatedDataset, split: Split, report: &mut Report) -> AnnotatedDataset {
    if ds.has_split(split) {
        ds.split(split).filter(|i| !i.annotations.is_empty())
    } else {
        report.warn(format!("no `{}` split; scoring every annotated instance", split.as_str()));
        ds.filter(|i| !i.annotations.is_empty())
    }
}

fn cmd_wel_eval(g: &Global, a: &WelEvalArgs, args: Vec<String>) -> CliResult<Report> {
    let loaded = load(g, &a.data.data)?;
    let (_, mut ensemble) = persist::load_ensemble(&a.model)?;
    check_labels(&ensemble, &loaded.dataset)?;
    if let Some(s) = a.weight_scheme {
        let s = scheme(s, a.temperature);
        s.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        ensemble = ensemble.reweighted(s)?;
    }
    let ds = &loaded.dataset;
    let mut report = start("wel eval", args, &loaded);
    let target = scoring_set(ds, a.split, &mut report);
    if target.is_empty() {
        return Err(Failure::Data("nothing to score: no annotated instances".into()));
    }
    let averaging = Averaging::default_for(ds);
    let preds = predict_all(&ensemble, &target);
    let scores = eval::evaluate(&preds, &target, averaging, TieBreak::default())?;
    report.block(
        analysis::WEL,
        json!({
            "split": a.split.as_str(),
            "scheme": ensemble.scheme,
            "weights": ensemble.weights,
            "scores": eval_json(&scores),
            "members": ensemble.members.iter().enumerate().map(|(i, m)| {
                let p = wel::predict_dataset(m, &target, &format!("member-{i}"));
                eval::evaluate(&p, &target, averaging, TieBreak::default()).map(|r| eval_json(&r))
            }).collect::<Result<Vec<_>, _>>()?,
        }),
    );
    report.exclude(analysis::WEL, ds.unannotated_count());
    if let Some((config, source)) = debias_config(&a.debias, &ensemble, ds)? {
        let (debiased, projected) = debias_set(&preds, &config)?;
        let after = eval::evaluate(&debiased, &target, averaging, TieBreak::default())?;
        report.block(
            analysis::DEBIAS,
            json!({
                "lambda": config.lambda,
                "bias": source,
                "before": eval_json(&scores),
                "after": eval_json(&after),
                "projected": projected,
            }),
        );
    }
    Ok(report)
}

fn cmd_wel_baseline(g: &Global, a: &WelBaselineArgs, args: Vec<String>) -> CliResult<Report> {
    let loaded = load(g, &a.data.data)?;
    let ds = &loaded.dataset;
    let settings = WelSettings {
        master_seed: a.seed,
        train: train_config(a.seed, a.epochs, a.learning_rate, a.hash_dims),
        holdout: HoldoutSpec::Auto { fraction: 0.15, seed: a.seed },
        ..WelSettings::default()
    };
    let target_kind = match a.target {
        TargetArg::Majority => SingleTarget::MajorityVote,
        TargetArg::Soft => SingleTarget::SoftLabel,
    };
    let (split, single) = wel::train_single(ds, &settings, target_kind)?;
    let mut report = start("wel baseline", args, &loaded);
    let target = scoring_set(ds, a.split, &mut report);
    if target.is_empty() {
        return Err(Failure::Data("nothing to score: no annotated instances".into()));
    }
    let averaging = Averaging::default_for(ds);
    let single_preds = wel::predict_dataset(&single, &target, "single");
    let single_scores = eval::evaluate(&single_preds, &target, averaging, TieBreak::default())?;
    report.block(
        "single_model",
        json!({
            "target": target_kind,
            "split": a.split.as_str(),
            "train_size": split.train.len(),
            "scores": eval_json(&single_scores),
        }),
    );
    if let Some(dir) = &a.compare {
        let (_, ensemble) = persist::load_ensemble(dir)?;
        check_labels(&ensemble, ds)?;
        if ensemble.n_labels() != single.n_labels() {
            return Err(Failure::Internal("label widths differ".into()));
        }
        let wel_preds = predict_all(&ensemble, &target);
        let wel_scores = eval::evaluate(&wel_preds, &target, averaging, TieBreak::default())?;
        let wl = eval::per_instance_losses(&wel_preds, &target)?;
        let sl = eval::per_instance_losses(&single_preds, &target)?;
        let ce: Vec<f64> = sl.iter().zip(&wl).map(|(s, w)| s.0 - w.0).collect();
        let md: Vec<f64> = sl.iter().zip(&wl).map(|(s, w)| s.1 - w.1).collect();
        let resamples = crate::experiment::PERMUTATION_RESAMPLES;
        report.block(
            "comparison",
            json!({
                "wel": eval_json(&wel_scores),
                "single": eval_json(&single_scores),
                "f1_gain": wel_scores.f1 - single_scores.f1,
                "ce_margin": single_scores.ce - wel_scores.ce,
                "md_margin": single_scores.md - wel_scores.md,
                "ce_p_value": eval::paired_permutation_p(&ce, resamples, a.seed)?,
                "md_p_value": eval::paired_permutation_p(&md, resamples, a.seed)?,
                "resamples": resamples,
            }),
        );
    }
    Ok(report)
}

/// Parses `args` (without the program name) and runs. Help and version
/// requests come back as `Ok` with the text on stdout.
pub fn main_with(args: Vec<String>) -> (i32, Option<String>, Option<String>) {
    let argv = std::iter::once("annobias".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            return if code == 0 { (0, Some(text), None) } else { (code, None, Some(text)) };
        }
    };
    let strict = cli.global.strict;
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli, args)));
    match result {
        Ok(Ok(outcome)) => {
            let code = if strict && outcome.warnings > 0 { EXIT_WARNINGS } else { 0 };
            (code, outcome.stdout, None)
        }
        Ok(Err(f)) => (f.exit_code(), None, Some(format!("error: {}\n", f.message()))),
        Err(_) => (EXIT_INTERNAL, None, Some("error: internal failure\n".into())),
    }
}

