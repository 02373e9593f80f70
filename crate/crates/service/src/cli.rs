//! Batch commands behind the `speaklabel` binary.

use crate::api::{self, AppState};
use crate::config::{AsrMode, ConfigError, ServiceConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use speaklabel_core::asr::MockAsr;
use speaklabel_core::dataset::GroundTruthSet;
use speaklabel_core::metrics::{per_image_csv, transcription_recall_at_k, ReportOptions, TrainingEvidence};
use speaklabel_core::pipeline::{process_dirs, CorpusRun, ImageFailure};
use speaklabel_core::session::{SessionStore, AUDIO_FILE, EVENTS_FILE, META_FILE};
use speaklabel_core::synth::{
    fixture_embeddings, location_corpus, replay_corpus, round_fixture, transcription_fixture, usage_fixture,
    WriteOptions, FIXTURE_SEED,
};
use speaklabel_core::trainer::{vocabulary_usage_rate, TrainingLog};
use speaklabel_core::Vocabulary;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
    #[error("validation found {0} problem(s)")]
    Invalid(usize),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Failed(_) => "failed",
            CliError::Invalid(_) => "invalid",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Failed(_) => EXIT_FAILURE,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Invalid(_) => EXIT_INVALID,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "speaklabel", version, about = "Speech-driven object class labelling")]
pub struct Cli {
    /// TOML configuration file; environment variables and flags override it.
    #[arg(long, global = true, env = "SPEAKLABEL_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the labelling pipeline over a session store.
    Process(ProcessArgs),
    /// Process a store and print the corpus report.
    Evaluate(EvaluateArgs),
    /// Grade training logs into round summaries.
    GradeTraining(GradeArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Check a store and fixture files for problems.
    Validate(ValidateArgs),
    /// Write the synthetic fixture corpora.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// Vocabulary file (repeatable).
    #[arg(long = "vocab")]
    pub vocabularies: Vec<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub asr: Option<AsrMode>,
    /// Mock answers; defaults to asr_fixture.json next to the store.
    #[arg(long)]
    pub asr_fixture: Option<PathBuf>,
    #[arg(long)]
    pub asr_endpoint: Option<String>,
    #[arg(long)]
    pub no_phrase_hints: bool,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Skip writing labeling.json and annotations.json.
    #[arg(long)]
    pub no_write: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// COCO-style ground truth.
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Training logs for transcription and vocabulary statistics (repeatable).
    #[arg(long = "training-log")]
    pub training_logs: Vec<PathBuf>,
    /// Ground truth for the training logs; defaults to --gt.
    #[arg(long)]
    pub training_gt: Option<PathBuf>,
    /// Also write one CSV row per image.
    #[arg(long)]
    pub per_image_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    #[arg(long, required = true)]
    pub log: Vec<PathBuf>,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long = "vocab")]
    pub vocabularies: Vec<PathBuf>,
    #[arg(long)]
    pub images_per_round: Option<usize>,
    #[arg(long)]
    pub min_recall: Option<f64>,
    #[arg(long)]
    pub min_precision: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Image pool as VOCABULARY_ID=COCO_FILE (repeatable).
    #[arg(long = "gt", value_parser = parse_pair)]
    pub ground_truth: Vec<(String, PathBuf)>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn parse_pair(s: &str) -> Result<(String, PathBuf), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected ID=PATH, got {s:?}"))?;
    Ok((k.to_string(), v.into()))
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub asr_fixture: Option<PathBuf>,
    #[arg(long = "training-log")]
    pub training_logs: Vec<PathBuf>,
    #[arg(long = "vocab")]
    pub vocabularies: Vec<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Directory holding vocab/coco80.json and vocab/ilsvrc200.json.
    #[arg(long, default_value = "fixtures")]
    pub fixtures: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub images: usize,
    #[arg(long, default_value_t = speaklabel_core::synth::SAMPLE_RATE)]
    pub sample_rate: u32,
    /// Replace the audio of this replay image with garbage.
    #[arg(long)]
    pub corrupt_audio: Option<usize>,
}

impl PipelineArgs {
    pub fn apply(&self, config: &mut ServiceConfig, store: Option<&Path>) {
        if !self.vocabularies.is_empty() {
            config.vocabularies = self.vocabularies.clone();
        }
        if let Some(e) = &self.embeddings {
            config.embeddings = e.clone();
        }
        if let Some(m) = self.asr {
            config.asr.mode = m;
        }
        if let Some(f) = &self.asr_fixture {
            config.asr.fixture = Some(f.clone());
        }
        if let Some(e) = &self.asr_endpoint {
            config.asr.endpoint = Some(e.clone());
        }
        if self.no_phrase_hints {
            config.asr.phrase_hints = false;
        }
        if let Some(d) = self.delta {
            config.delta_s = d;
        }
        if let Some(p) = self.parallelism {
            config.parallelism = p;
        }
        if config.asr.mode == AsrMode::Mock && config.asr.fixture.is_none() {
            if let Some(candidate) = store.and_then(Path::parent).map(|p| p.join("asr_fixture.json")) {
                if candidate.is_file() {
                    config.asr.fixture = Some(candidate);
                }
            }
        }
    }
}

/// Base configuration: file (if any) plus environment.
pub fn base_config(path: Option<&Path>) -> Result<ServiceConfig, CliError> {
    let mut config = match path {
        Some(p) => ServiceConfig::from_file(p)?,
        None => ServiceConfig::default(),
    };
    config.apply_env()?;
    Ok(config)
}

/// Runs the pipeline over every session of `store`, picking each session's
/// vocabulary from `config`.
pub fn run_store(config: &ServiceConfig, store: &Path, write_outputs: bool) -> Result<(CorpusRun, BTreeMap<String, Arc<Vocabulary>>), CliError> {
    if !store.is_dir() {
        return Err(CliError::Usage(format!("store {} is not a directory", store.display())));
    }
    let vocabularies = config.load_vocabularies()?;
    let table = config.load_embeddings()?;
    let asr = config.build_asr()?;
    let dirs = SessionStore::new(store).session_dirs().map_err(failed)?;
    let mut groups: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    let mut run = CorpusRun::default();
    for dir in dirs {
        match SessionStore::load_meta(&dir) {
            Ok(meta) if vocabularies.contains_key(&meta.vocabulary_id) => groups.entry(meta.vocabulary_id).or_default().push(dir),
            Ok(meta) => run.failures.push(ImageFailure {
                path: dir,
                error: format!("unknown vocabulary {:?}", meta.vocabulary_id),
            }),
            Err(e) => run.failures.push(ImageFailure {
                path: dir,
                error: e.to_string(),
            }),
        }
    }
    let pipeline = config.pipeline_config();
    for (id, dirs) in &groups {
        let part = process_dirs(dirs, &vocabularies[id], asr.as_ref(), &table, &pipeline, write_outputs);
        run.images.extend(part.images);
        run.failures.extend(part.failures);
    }
    run.images.sort_by(|a, b| a.dir.cmp(&b.dir));
    run.failures.sort_by(|a, b| a.path.cmp(&b.path));
    Ok((run, vocabularies))
}

pub fn process(config: &ServiceConfig, args: &ProcessArgs) -> Result<Value, CliError> {
    let (run, _) = run_store(config, &args.store, !args.no_write)?;
    Ok(json!({
        "processed": run.images.len(),
        "failures": run.failures,
        "labels": run.images.iter().map(|i| i.labeling.label_set().len()).sum::<usize>(),
    }))
}

fn single_vocabulary<'a>(vocabularies: &'a BTreeMap<String, Arc<Vocabulary>>, gt_path: &Path) -> Result<&'a Arc<Vocabulary>, CliError> {
    let text = std::fs::read_to_string(gt_path).map_err(|e| failed(format!("{}: {e}", gt_path.display())))?;
    let declared = serde_json::from_str::<Value>(&text)
        .ok()
        .and_then(|v| v.get("vocabulary_id").and_then(Value::as_str).map(str::to_string));
    match declared {
        Some(id) => vocabularies
            .get(&id)
            .ok_or_else(|| CliError::Usage(format!("{} uses vocabulary {id:?}, which is not loaded", gt_path.display()))),
        None if vocabularies.len() == 1 => Ok(vocabularies.values().next().expect("one vocabulary")),
        None => Err(CliError::Usage(format!(
            "{} names no vocabulary_id; pass exactly one --vocab",
            gt_path.display()
        ))),
    }
}

pub fn load_training(
    paths: &[PathBuf],
    gt: &GroundTruthSet,
    vocab: &Vocabulary,
    config: &ServiceConfig,
) -> Result<TrainingEvidence, CliError> {
    let mut evidence = TrainingEvidence::default();
    for path in paths {
        let log = TrainingLog::load(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
        let (_, records, _) = log
            .grade(&config.training_config(vocab.id()), vocab, |id| gt.get(id).map(|g| g.class_set()))
            .map_err(failed)?;
        if log.phrase_hints {
            evidence.with_hints.extend(records);
        } else {
            evidence.without_hints.extend(records);
        }
    }
    Ok(evidence)
}

/// Report bytes exactly as printed by `evaluate`.
pub fn evaluate(config: &ServiceConfig, args: &EvaluateArgs) -> Result<Vec<u8>, CliError> {
    let (run, vocabularies) = run_store(config, &args.store, false)?;
    let vocab = single_vocabulary(&vocabularies, &args.gt)?;
    let gt = GroundTruthSet::load(&args.gt, vocab).map_err(|e| failed(format!("{}: {e}", args.gt.display())))?;
    let training_gt = match &args.training_gt {
        Some(p) => GroundTruthSet::load(p, vocab).map_err(|e| failed(format!("{}: {e}", p.display())))?,
        None => gt.clone(),
    };
    let training = load_training(&args.training_logs, &training_gt, vocab, config)?;
    let options = ReportOptions::default();
    if let Some(csv_path) = &args.per_image_csv {
        let (evals, _) = run.evaluate(&gt, &options);
        let csv = per_image_csv(&evals);
        std::fs::write(csv_path, csv).map_err(|e| failed(format!("{}: {e}", csv_path.display())))?;
    }
    let report = run.report(&gt, &training, vocab, &options);
    let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn grade_training(config: &ServiceConfig, args: &GradeArgs) -> Result<Value, CliError> {
    let mut config = config.clone();
    if !args.vocabularies.is_empty() {
        config.vocabularies = args.vocabularies.clone();
    }
    if let Some(n) = args.images_per_round {
        config.training.images_per_round = n;
    }
    if let Some(r) = args.min_recall {
        config.training.min_recall = r;
    }
    if let Some(p) = args.min_precision {
        config.training.min_precision = p;
    }
    let vocabularies = config.load_vocabularies()?;
    let vocab = single_vocabulary(&vocabularies, &args.gt)?;
    let gt = GroundTruthSet::load(&args.gt, vocab).map_err(|e| failed(format!("{}: {e}", args.gt.display())))?;
    let training = config.training_config(vocab.id());
    training.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut annotators = Vec::new();
    for path in &args.log {
        let log = TrainingLog::load(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
        let (rounds, records, partial) = log
            .grade(&training, vocab, |id| gt.get(id).map(|g| g.class_set()))
            .map_err(failed)?;
        annotators.push(json!({
            "annotator_id": log.annotator_id,
            "phrase_hints": log.phrase_hints,
            "rounds": rounds,
            "partial_round_images": partial.map_or(0, |p| p.records().len()),
            "vocabulary_usage_rate": vocabulary_usage_rate(&records, vocab),
            "transcription_recall_at_1": transcription_recall_at_k(&records, 1),
            "transcription_recall_at_3": transcription_recall_at_k(&records, 3),
        }));
    }
    Ok(json!({ "vocabulary_id": vocab.id(), "annotators": annotators }))
}

#[derive(Debug, Serialize)]
pub struct Issue {
    pub path: PathBuf,
    pub error: String,
}

pub fn validate(config: &ServiceConfig, args: &ValidateArgs) -> Result<(Value, Vec<Issue>), CliError> {
    let mut config = config.clone();
    if !args.vocabularies.is_empty() {
        config.vocabularies = args.vocabularies.clone();
    }
    if let Some(e) = &args.embeddings {
        config.embeddings = e.clone();
    }
    let vocabularies = config.load_vocabularies()?;
    let mut issues = Vec::new();
    let mut checked = 0;
    if let Err(e) = config.load_embeddings() {
        issues.push(Issue {
            path: config.embeddings.clone(),
            error: e.to_string(),
        });
    }
    if let Some(store) = &args.store {
        if !store.is_dir() {
            return Err(CliError::Usage(format!("store {} is not a directory", store.display())));
        }
        for entry in walkdir::WalkDir::new(store).sort_by_file_name() {
            let entry = entry.map_err(failed)?;
            let dir = entry.path();
            if !entry.file_type().is_dir() {
                continue;
            }
            let has = |f: &str| dir.join(f).is_file();
            if !(has(META_FILE) || has(EVENTS_FILE) || has(AUDIO_FILE)) {
                continue;
            }
            checked += 1;
            if !has(META_FILE) {
                issues.push(Issue {
                    path: dir.join(META_FILE),
                    error: "session folder without meta.json".into(),
                });
                continue;
            }
            match SessionStore::load(dir) {
                Ok(s) if !vocabularies.contains_key(&s.meta.vocabulary_id) => issues.push(Issue {
                    path: dir.join(META_FILE),
                    error: format!("unknown vocabulary {:?}", s.meta.vocabulary_id),
                }),
                Ok(_) => {}
                Err(e) => issues.push(Issue {
                    path: dir.to_path_buf(),
                    error: e.to_string(),
                }),
            }
        }
    }
    let mut warnings = Vec::new();
    if let Some(gt) = &args.gt {
        match single_vocabulary(&vocabularies, gt).and_then(|v| GroundTruthSet::load(gt, v).map_err(failed)) {
            Ok(set) => warnings.extend(set.warnings),
            Err(e) => issues.push(Issue {
                path: gt.clone(),
                error: e.to_string(),
            }),
        }
    }
    if let Some(f) = &args.asr_fixture {
        if let Err(e) = MockAsr::load(f) {
            issues.push(Issue {
                path: f.clone(),
                error: e.to_string(),
            });
        }
    }
    for log in &args.training_logs {
        if let Err(e) = TrainingLog::load(log) {
            issues.push(Issue {
                path: log.clone(),
                error: e.to_string(),
            });
        }
    }
    let summary = json!({ "sessions_checked": checked, "issues": issues, "warnings": warnings });
    Ok((summary, issues))
}

pub fn synth(args: &SynthArgs) -> Result<Value, CliError> {
    let load = |name: &str| {
        let path = args.fixtures.join("vocab").join(name);
        Vocabulary::load(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    };
    let coco = load("coco80.json")?;
    let ilsvrc = load("ilsvrc200.json")?;
    let out = &args.out;
    let options = WriteOptions {
        sample_rate: args.sample_rate,
        corrupt_audio: args.corrupt_audio,
    };
    let replay = replay_corpus(&coco, args.images).write(&out.join("coco300"), &coco, &options).map_err(failed)?;
    let plain = WriteOptions {
        sample_rate: args.sample_rate,
        corrupt_audio: None,
    };
    location_corpus(&coco, true).write(&out.join("location"), &coco, &plain).map_err(failed)?;
    let training = out.join("training");
    for (name, fixture, vocab) in [
        ("with_hints", transcription_fixture(&coco, true), &coco),
        ("without_hints", transcription_fixture(&coco, false), &coco),
        ("usage_coco", usage_fixture(&coco, 200, &["lamp"]), &coco),
        (
            "usage_ilsvrc",
            usage_fixture(&ilsvrc, 200, &["couch", "tv", "cell phone", "teddy bear", "kite", "giraffe", "oven"]),
            &ilsvrc,
        ),
        ("round_800", round_fixture(&coco, 800), &coco),
        ("round_799", round_fixture(&coco, 799), &coco),
    ] {
        fixture.write(&training.join(name), vocab).map_err(failed)?;
    }
    let embeddings = out.join("embeddings.txt");
    std::fs::create_dir_all(out).map_err(failed)?;
    std::fs::write(&embeddings, fixture_embeddings(&[&coco, &ilsvrc], FIXTURE_SEED).to_text()).map_err(failed)?;
    Ok(json!({
        "store": replay.store,
        "gt": replay.gt,
        "asr_fixture": replay.asr_fixture,
        "embeddings": embeddings,
    }))
}

pub fn serve(config: ServiceConfig) -> Result<(), CliError> {
    let resources = config.load_resources()?;
    let state = Arc::new(AppState::new(config, resources).map_err(failed)?);
    let rt = tokio::runtime::Runtime::new().map_err(failed)?;
    rt.block_on(api::serve(state)).map_err(failed)
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json serializes"));
}

/// Executes a parsed command line, printing results on stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Process(args) => {
            args.pipeline.apply(&mut config, Some(&args.store));
            print_json(&process(&config, &args)?);
        }
        Command::Evaluate(args) => {
            args.pipeline.apply(&mut config, Some(&args.store));
            let bytes = evaluate(&config, &args)?;
            use std::io::Write;
            std::io::stdout().write_all(&bytes).map_err(failed)?;
        }
        Command::GradeTraining(args) => print_json(&grade_training(&config, &args)?),
        Command::Serve(args) => {
            args.pipeline.apply(&mut config, None);
            if let Some(l) = args.listen {
                config.listen = l;
            }
            if let Some(d) = args.data_dir {
                config.data_dir = d;
            }
            config.ground_truth.extend(args.ground_truth);
            serve(config)?;
        }
        Command::Validate(args) => {
            let (summary, issues) = validate(&config, &args)?;
            print_json(&summary);
            for issue in &issues {
                log::error!("{}: {}", issue.path.display(), issue.error);
            }
            if !issues.is_empty() {
                return Err(CliError::Invalid(issues.len()));
            }
        }
        Command::Synth(args) => print_json(&synth(&args)?),
    }
    Ok(())
}
