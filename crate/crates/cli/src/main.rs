//! `kgsel`: train, run and evaluate the knowledge-grounded turn pipeline.
//!
//! Exit codes: 0 on success, 1 on internal failures (an unreachable model
//! server, say), 2 on bad input or configuration.

mod config;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgsel_core::detection::{self, augment_detection_data, tune_threshold, DetectionModel, DetectionSample, Provenance};
use kgsel_core::dialogue::{load_logs, load_labels};
use kgsel_core::domain::{self, augment_attraction_dialogues, DomainClassifier, DomainSample, SlotAnnotations};
use kgsel_core::entity::EntityTracker;
use kgsel_core::eval::{evaluate_predictions, paired_t_test, per_sample_scores, EvalMode};
use kgsel_core::experiment::{detection_training_set, train_builtin, DETECTOR_FILE, DOMAIN_FILE, RANKER_FILE};
use kgsel_core::gateway::{
    serve, BuiltinHandler, Endpoint, GatewayDomainScorer, GatewayGenerator, GatewayPool, GatewayRelevanceScorer,
    GatewayTextScorer,
};
use kgsel_core::linear::{LinearModel, TrainReport};
use kgsel_core::model_file::ModelFile;
use kgsel_core::pipeline::{GeneratorMode, Models, Pipeline};
use kgsel_core::ranker::{corpus_positives, train_ranker, LexicalRanker, RelevanceScorer};
use kgsel_core::synth;
use kgsel_core::{Dialogue, KnowledgeBase, LabeledCorpus, TurnLabel};
use serde::Serialize;

use crate::config::{existing, RunConfig};

/// Bad input or configuration; exits with status 2.
#[derive(Debug)]
pub struct UserError(pub String);

impl fmt::Display for UserError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

#[derive(Parser, Debug)]
#[command(name = "kgsel", version, about = "Knowledge-seeking turn detection, FAQ selection and grounded responses")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set pipeline.detection_threshold=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Derive every component seed from this one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset root with knowledge.json and train/val/test splits.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    kb: Option<PathBuf>,
    #[arg(long, global = true)]
    models: Option<PathBuf>,
    #[arg(long, global = true)]
    outputs: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect the knowledge base.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Write augmented training samples.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Train a built-in model and store it in the models directory.
    Train {
        #[arg(value_enum)]
        model: TrainTarget,
        #[command(flatten)]
        split: SplitArgs,
        /// Pre-built samples (from `augment`) instead of the training split.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Re-tune the stored detector's threshold for F1 on a split.
    TuneThreshold {
        #[command(flatten)]
        split: SplitArgs,
    },
    /// Run the pipeline over a split and write predictions.
    Run {
        #[command(flatten)]
        split: SplitArgs,
        /// Worker threads (0 picks one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Model server for every role: `host:port` or a command to spawn.
        #[arg(long)]
        gateway: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against gold labels.
    Evaluate {
        #[arg(value_enum)]
        mode: Mode,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        /// Structured report file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-sample scores for `ttest`.
        #[arg(long)]
        per_sample: Option<PathBuf>,
    },
    /// Paired t-test between two per-sample score files.
    Ttest {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer gateway requests with the built-in models, on stdio or TCP.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
enum KbCommand {
    /// Per-domain entity and snippet counts.
    Stats {
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Parse and check the knowledge base.
    Validate,
}

#[derive(Subcommand, Debug)]
enum AugmentCommand {
    /// Corpus utterances plus KB questions as detection samples.
    Detection {
        #[command(flatten)]
        split: SplitArgs,
        /// Only the KB-derived positives.
        #[arg(long)]
        kb_only: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attraction dialogues rewritten to end in KB questions.
    Domain {
        #[command(flatten)]
        split: SplitArgs,
        /// Slot annotations aligned with the logs.
        #[arg(long)]
        slots: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TrainTarget {
    Detector,
    Domain,
    Ranker,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Detection,
    Selection,
    Generation,
    End2end,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Detection => EvalMode::Detection,
            Mode::Selection => EvalMode::Selection,
            Mode::Generation => EvalMode::Generation,
            Mode::End2end => EvalMode::End2end,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct SplitArgs {
    /// Split directory under the dataset root (default depends on the command).
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    logs: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

impl SplitArgs {
    fn logs_path(&self, cfg: &RunConfig, default: &str) -> anyhow::Result<PathBuf> {
        match &self.logs {
            Some(p) => existing(p.clone()),
            None => existing(cfg.split_paths(self.split.as_deref().unwrap_or(default))?.0),
        }
    }

    fn labels_path(&self, cfg: &RunConfig, default: &str) -> anyhow::Result<PathBuf> {
        match &self.labels {
            Some(p) => existing(p.clone()),
            None => existing(cfg.split_paths(self.split.as_deref().unwrap_or(default))?.1),
        }
    }

    fn corpus(&self, cfg: &RunConfig, default: &str) -> anyhow::Result<LabeledCorpus> {
        let logs = self.logs_path(cfg, default)?;
        let labels = self.labels_path(cfg, default)?;
        LabeledCorpus::load_paths(&logs, &labels)
            .with_context(|| format!("loading {} with {}", logs.display(), labels.display()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UserError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<kgsel_core::Error>() {
            return if e.is_user_error() { 2 } else { 1 };
        }
        if cause.is::<io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    if cli.data.is_some() {
        cfg.paths.data = cli.data;
    }
    if cli.kb.is_some() {
        cfg.paths.kb = cli.kb;
    }
    if let Some(m) = cli.models {
        cfg.paths.models = m;
    }
    if let Some(o) = cli.outputs {
        cfg.paths.outputs = o;
    }
    cfg.validate()?;

    match cli.command {
        Command::Kb(KbCommand::Stats { json }) => {
            let kb = load_kb(&cfg)?;
            let stats = kb.stats();
            println!("{stats}");
            if let Some(path) = json {
                write_json(&path, &stats)?;
            }
        }
        Command::Kb(KbCommand::Validate) => {
            let kb = load_kb(&cfg)?;
            let stats = kb.stats();
            println!(
                "ok: {} domains, {} entities, {} snippets",
                stats.domains.len(),
                stats.total_entities,
                stats.total_snippets
            );
        }
        Command::Augment(AugmentCommand::Detection { split, kb_only, out }) => {
            let kb = load_kb(&cfg)?;
            let samples = if kb_only {
                augment_detection_data(&kb)
            } else {
                detection_training_set(&kb, &split.corpus(&cfg, "train")?, true)
            };
            let count = |p: Provenance| samples.iter().filter(|s| s.provenance == p).count();
            println!(
                "{} samples: corpus {}  kb questions {}  it-variants {}",
                samples.len(),
                count(Provenance::Corpus),
                count(Provenance::KbQuestion),
                count(Provenance::KbQuestionItReplaced)
            );
            write_json(&out, &samples)?;
        }
        Command::Augment(AugmentCommand::Domain { split, slots, out }) => {
            let kb = load_kb(&cfg)?;
            let logs = read_logs(&split.logs_path(&cfg, "train")?)?;
            let slots: SlotAnnotations = read_json(&existing(slots)?)?;
            let samples = augment_attraction_dialogues(&logs, &slots, &kb, cfg.training.domain.seed)?;
            println!("{} augmented attraction samples", samples.len());
            write_json(&out, &samples)?;
        }
        Command::Train { model, split, samples } => train(&cfg, model, &split, samples.as_deref())?,
        Command::TuneThreshold { split } => {
            let path = model_path(&cfg, DETECTOR_FILE)?;
            let (mut det, model) = DetectionModel::from_file(ModelFile::load(&path)?)?;
            let val = split.corpus(&cfg, "val")?;
            let before = det.threshold();
            let choice = det.tune(&detection::validation_pairs(&val))?;
            det.to_file(&model).save(&path)?;
            println!(
                "threshold {before} -> {} (F1 {:.4}); wrote {}",
                choice.threshold,
                choice.f1,
                path.display()
            );
        }
        Command::Run {
            split,
            workers,
            gateway,
            out,
        } => {
            if let Some(g) = gateway {
                cfg.gateway.endpoint = Some(g);
            }
            let kb = load_kb(&cfg)?;
            let dialogues = read_logs(&split.logs_path(&cfg, "test")?)?;
            let models = build_models(&cfg, &kb)?;
            let pipeline = Pipeline::new(&kb, models, cfg.pipeline.clone())?;
            let output = pipeline.batch_run(&dialogues, workers)?;
            eprintln!("{}", output.report);
            for (i, e) in output.errors() {
                eprintln!("sample {i}: {e}");
            }
            if output.report.succeeded == 0 && !dialogues.is_empty() {
                let (_, first) = output.errors().next().expect("failures recorded");
                bail!(anyhow::Error::from(clone_error(first)).context("every sample failed"));
            }
            let path = out.unwrap_or_else(|| cfg.paths.outputs.join("predictions.json"));
            write_json(&path, &output.predictions())?;
            println!(
                "{} predictions ({} knowledge-seeking, {} failed) -> {}",
                dialogues.len(),
                output.report.knowledge_seeking,
                output.report.failed,
                path.display()
            );
        }
        Command::Evaluate {
            mode,
            predictions,
            split,
            out,
            per_sample,
        } => {
            let preds = read_labels(&existing(predictions)?)?;
            let golds = read_labels(&split.labels_path(&cfg, "test")?)?;
            let mode = EvalMode::from(mode);
            let report = evaluate_predictions(mode, &preds, &golds)?;
            print!("{report}");
            let name = format!("report_{}.json", mode_name(mode));
            let path = out.unwrap_or_else(|| cfg.paths.outputs.join(name));
            write_json(&path, &report)?;
            if let Some(ps) = per_sample {
                write_json(&ps, &per_sample_scores(mode, &preds, &golds)?)?;
            }
        }
        Command::Ttest { a, b, out } => {
            let xs = read_scores(&existing(a)?)?;
            let ys = read_scores(&existing(b)?)?;
            let t = paired_t_test(&xs, &ys)?;
            println!("t={} p={} n={}", t.t, t.p, t.n);
            if let Some(path) = out {
                write_json(&path, &t)?;
            }
        }
        Command::Synth { out } => {
            let corpus = synth::generate(&cfg.synth)?;
            corpus.write_dir(&out)?;
            println!(
                "{} snippets; train {}  val {}  test {} -> {}",
                corpus.kb.len(),
                corpus.train.len(),
                corpus.validation.len(),
                corpus.test.len(),
                out.display()
            );
        }
        Command::Serve { listen } => {
            let kb = load_kb(&cfg)?;
            let handler = load_handler(&cfg, &kb)?;
            match listen {
                None => {
                    let stdin = io::stdin().lock();
                    let n = serve(stdin, io::stdout().lock(), |r| handler.handle(r))?;
                    eprintln!("served {n} requests");
                }
                Some(addr) => {
                    let listener = TcpListener::bind(&addr)
                        .map_err(|e| UserError(format!("cannot listen on {addr}: {e}")))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    for stream in listener.incoming() {
                        let stream = stream?;
                        let h = handler.clone();
                        std::thread::spawn(move || {
                            let reader = match stream.try_clone() {
                                Ok(s) => io::BufReader::new(s),
                                Err(e) => return eprintln!("connection: {e}"),
                            };
                            if let Err(e) = serve(reader, stream, |r| h.handle(r)) {
                                eprintln!("connection: {e}");
                            }
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Detection => "detection",
        EvalMode::Selection => "selection",
        EvalMode::Generation => "generation",
        EvalMode::End2end => "end2end",
    }
}

fn train(cfg: &RunConfig, target: TrainTarget, split: &SplitArgs, samples: Option<&Path>) -> anyhow::Result<()> {
    let kb = load_kb(cfg)?;
    let dir = &cfg.paths.models;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let training = &cfg.training;
    let train_split = || split.corpus(cfg, "train");
    // Threshold tuning always reads the dataset's validation split.
    let val_split = || SplitArgs::default().corpus(cfg, "val");
    match target {
        TrainTarget::Detector => {
            let samples: Vec<DetectionSample> = match samples {
                Some(p) => read_json(&existing(p.to_path_buf())?)?,
                None => detection_training_set(&kb, &train_split()?, training.augment_detection),
            };
            let (det, model, report) = detection::train_detector(&samples, &training.detector, 0.5)?;
            print_report("detector", &report);
            let val = val_split()?;
            let pairs = detection::validation_pairs(&val);
            let scores: Vec<f64> = pairs.iter().map(|(u, _)| model.probability(u)).collect();
            let labels: Vec<bool> = pairs.iter().map(|(_, y)| *y).collect();
            let choice = tune_threshold(&scores, &labels)?;
            let det = det.with_threshold(choice.threshold)?;
            println!("threshold {} (validation F1 {:.4})", choice.threshold, choice.f1);
            det.to_file(&model).save(dir.join(DETECTOR_FILE))?;
        }
        TrainTarget::Domain => {
            let samples: Vec<DomainSample> = match samples {
                Some(p) => read_json(&existing(p.to_path_buf())?)?,
                None => domain::corpus_samples(&train_split()?),
            };
            let (_, model, report) = domain::train_domain_classifier(&samples, &training.domain)?;
            print_report("domain", &report);
            DomainClassifier::to_file(&model).save(dir.join(DOMAIN_FILE))?;
        }
        TrainTarget::Ranker => {
            if samples.is_some() {
                bail!(UserError("the ranker trains from the labelled split, not a samples file".into()));
            }
            let tracker = EntityTracker::new(&kb, cfg.pipeline.tracking());
            let (ranker, report) = train_ranker(&corpus_positives(&train_split()?), &kb, &tracker, &training.ranker)?;
            print_report("ranker", &report);
            println!("weights {:?}", ranker.weights);
            ranker.to_file().save(dir.join(RANKER_FILE))?;
        }
        TrainTarget::All => {
            if samples.is_some() {
                bail!(UserError("--samples applies to a single model".into()));
            }
            let (models, summary) = train_builtin(&kb, &train_split()?, &val_split()?, training, &cfg.pipeline.tracking())?;
            print_report("detector", &summary.detector);
            println!(
                "threshold {} (validation F1 {:.4})",
                summary.threshold.threshold, summary.threshold.f1
            );
            print_report("domain", &summary.domain);
            print_report("ranker", &summary.ranker);
            models.save(dir)?;
        }
    }
    println!("models in {}", dir.display());
    Ok(())
}

fn print_report(name: &str, r: &TrainReport) {
    let last = r.loss_curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "{name}: train accuracy {:.4}  final loss {last:.6}  epochs {}",
        r.train_accuracy,
        r.loss_curve.len()
    );
}

fn model_path(cfg: &RunConfig, file: &str) -> anyhow::Result<PathBuf> {
    let path = cfg.paths.models.join(file);
    if !path.exists() {
        bail!(UserError(format!("{} not found; run `kgsel train` first", path.display())));
    }
    Ok(path)
}

/// Local models for roles without a gateway endpoint, gateway-backed
/// scorers for the rest. Roles sharing an endpoint share a pool.
fn build_models(cfg: &RunConfig, kb: &KnowledgeBase) -> anyhow::Result<Models> {
    let gw = &cfg.gateway;
    let mut pools: HashMap<String, Arc<GatewayPool>> = HashMap::new();
    let mut pool = |ep: &str| -> anyhow::Result<Arc<GatewayPool>> {
        if let Some(p) = pools.get(ep) {
            return Ok(p.clone());
        }
        let endpoint: Endpoint = ep.parse()?;
        let p = Arc::new(
            GatewayPool::connect(endpoint, gw.pool_size, gw.timeout())
                .with_context(|| format!("connecting to {ep}"))?,
        );
        pools.insert(ep.to_string(), p.clone());
        Ok(p)
    };

    let detector = match gw.for_role(&gw.detector) {
        None => DetectionModel::from_file(ModelFile::load(model_path(cfg, DETECTOR_FILE)?)?)?.0,
        Some(ep) => {
            // The remote scorer has no threshold of its own; take the stored
            // one when present.
            let local = cfg.paths.models.join(DETECTOR_FILE);
            let threshold = match ModelFile::load(&local) {
                Ok(f) => DetectionModel::from_file(f)?.0.threshold(),
                Err(_) => 0.5,
            };
            DetectionModel::new(Arc::new(GatewayTextScorer(pool(ep)?)), threshold)?
        }
    };
    let domain = match gw.for_role(&gw.domain) {
        None => DomainClassifier::from_file(ModelFile::load(model_path(cfg, DOMAIN_FILE)?)?)?.0,
        Some(ep) => DomainClassifier::new(Arc::new(GatewayDomainScorer(pool(ep)?))),
    };
    let ranker: Arc<dyn RelevanceScorer> = match gw.for_role(&gw.ranker) {
        None => Arc::new(LexicalRanker::from_file(ModelFile::load(model_path(cfg, RANKER_FILE)?)?, kb)?),
        Some(ep) => Arc::new(GatewayRelevanceScorer(pool(ep)?)),
    };
    let generator = match cfg.pipeline.generator {
        GeneratorMode::Template => None,
        GeneratorMode::Gateway => {
            let ep = gw
                .for_role(&gw.generator)
                .ok_or_else(|| UserError("gateway generation needs a generator endpoint".into()))?;
            Some(Arc::new(GatewayGenerator(pool(ep)?)) as _)
        }
    };
    Ok(Models {
        detector,
        domain,
        ranker,
        generator,
    })
}

/// Whichever built-in models are present in the models directory.
fn load_handler(cfg: &RunConfig, kb: &KnowledgeBase) -> anyhow::Result<BuiltinHandler> {
    let dir = &cfg.paths.models;
    let load = |name: &str| -> anyhow::Result<Option<ModelFile>> {
        let path = dir.join(name);
        if path.exists() {
            Ok(Some(ModelFile::load(&path).with_context(|| format!("loading {}", path.display()))?))
        } else {
            Ok(None)
        }
    };
    let detector: Option<Arc<LinearModel>> = load(DETECTOR_FILE)?
        .map(|f| DetectionModel::from_file(f).map(|(_, m)| m))
        .transpose()?;
    let domain = load(DOMAIN_FILE)?
        .map(|f| DomainClassifier::from_file(f).map(|(_, m)| m))
        .transpose()?;
    let ranker = load(RANKER_FILE)?
        .map(|f| LexicalRanker::from_file(f, kb).map(Arc::new))
        .transpose()?;
    if detector.is_none() && domain.is_none() && ranker.is_none() {
        bail!(UserError(format!("no model files in {}", dir.display())));
    }
    Ok(BuiltinHandler {
        detector,
        domain,
        ranker,
        follow_up: Some(cfg.pipeline.follow_up.clone()),
    })
}

/// `Error` is not `Clone`; rebuild the reportable part of a sample failure.
fn clone_error(e: &kgsel_core::Error) -> kgsel_core::Error {
    use kgsel_core::Error as E;
    let msg = e.to_string();
    match e.root() {
        E::ScorerUnavailable(_) => E::ScorerUnavailable(msg),
        E::GeneratorUnavailable(_) => E::GeneratorUnavailable(msg),
        E::Protocol(_) => E::Protocol(msg),
        _ => E::Validation(msg),
    }
}

fn load_kb(cfg: &RunConfig) -> anyhow::Result<KnowledgeBase> {
    let path = cfg.kb_path()?;
    KnowledgeBase::load_path(&path).with_context(|| format!("loading {}", path.display()))
}

fn read_logs(path: &Path) -> anyhow::Result<Vec<Dialogue>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_logs(BufReader::new(f)).with_context(|| format!("loading {}", path.display()))
}

fn read_labels(path: &Path) -> anyhow::Result<Vec<TurnLabel>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    load_labels(BufReader::new(f)).with_context(|| format!("loading {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

/// A JSON array of numbers, or numbers separated by whitespace.
fn read_scores(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| UserError(format!("{}: '{tok}' is not a number", path.display())).into())
        })
        .collect()
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
