//! Command implementations as library functions. Each public entry point
//! writes exactly one manifest into its output directory on success.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use crisis_core::baselines::{
    doc_ids, doc_matrix, doc_words, fit_baseline, predict as predict_baseline, BaselineKind, BaselineModel,
    BaselineSpec, EmbeddingTable, Features, OovPolicy, Representation,
};
use crisis_core::checkpoint::Checkpoint;
use crisis_core::corpus::{
    load_crisislex, split_indices, synthesize, ClassTable, ColumnSchema, LabeledCorpus, SplitSpec, Task,
};
use crisis_core::encoder::EncoderConfig;
use crisis_core::heads::{embed_sequences, write_embeddings, SequenceClassifier, TweetEmbedding};
use crisis_core::metrics::MetricsReport;
use crisis_core::seed;
use crisis_core::tokenizer::{tokenize, train_vocab, TokenSequence, Vocab};
use crisis_core::train::{
    evaluate, fit, history_to_jsonl, hyperparam_search, predict, EpochRecord, FitData, Leaderboard, TrainConfig,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bundle::{Bundle, Part};
use crate::config::RunConfig;
use crate::manifest::RunManifest;

pub const CHECKPOINT: &str = "model.ckpt";
pub const HISTORY: &str = "history.jsonl";
pub const REPORT: &str = "report.txt";
pub const VAL_REPORT: &str = "val_report.txt";
pub const LEADERBOARD: &str = "leaderboard.json";

pub const KIND_CLASSIFIER: &str = "sequence-classifier";
pub const KIND_BASELINE: &str = "baseline";

const EVAL_BATCH: usize = 64;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>, manifest: &mut RunManifest) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path);
    Ok(())
}

// ---------------------------------------------------------------- prepare

/// Where `prepare` gets its corpus from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Files {
        inputs: Vec<PathBuf>,
        /// `c6`, `c36` or a class-table file.
        classes: String,
        schema: SchemaArgs,
    },
    Synthetic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaArgs {
    pub id: Option<String>,
    pub text: Option<String>,
    pub label: Option<String>,
    pub event: Option<String>,
    pub source_tag: Option<String>,
}

impl SchemaArgs {
    fn resolve(&self) -> ColumnSchema {
        let d = ColumnSchema::default();
        ColumnSchema {
            id: self.id.clone().unwrap_or(d.id),
            text: self.text.clone().unwrap_or(d.text),
            label: self.label.clone().unwrap_or(d.label),
            event: self.event.clone(),
            source_tag: self.source_tag.clone(),
        }
    }
}

/// Static word vectors to place in a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableSource {
    /// Copy an existing table file.
    File(PathBuf),
    /// One-hot vectors over the training words (bag of words).
    OneHot,
    /// Random Gaussian vectors of this dimension over the training words.
    Random(usize),
}

impl std::str::FromStr for TableSource {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "one-hot" {
            return Ok(TableSource::OneHot);
        }
        if let Some(d) = s.strip_prefix("random:") {
            let dim: usize = d.parse().map_err(|_| anyhow!("bad dimension in '{s}'"))?;
            if dim == 0 {
                bail!(crisis_core::Error::Config("random table dimension must be positive".into()));
            }
            return Ok(TableSource::Random(dim));
        }
        Ok(TableSource::File(PathBuf::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareRequest {
    pub source: Source,
    pub table: Option<TableSource>,
    pub out_dir: PathBuf,
    pub config: RunConfig,
}

fn class_table(spec: &str) -> Result<ClassTable> {
    Ok(match spec.to_ascii_lowercase().as_str() {
        "c6" => ClassTable::c6(),
        "c36" => ClassTable::c36(),
        _ => ClassTable::load(Path::new(spec))?,
    })
}

/// Distinct words of the training split in first-appearance order.
pub fn training_words(corpus: &LabeledCorpus) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for t in corpus.tweets() {
        for w in doc_words(&t.text) {
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
    }
    out
}

/// Builds a dataset bundle: canonical corpus, split indices, class names and
/// optionally a static word table.
pub fn prepare(req: &PrepareRequest) -> Result<Bundle> {
    let mut manifest = RunManifest::new("prepare", req);
    let cfg = &req.config;
    manifest.seed("root", cfg.seed);
    let corpus = match &req.source {
        Source::Synthetic => {
            manifest.seed("synth", cfg.synth.seed);
            manifest.timed("synthesize", || synthesize(&cfg.synth))?
        }
        Source::Files {
            inputs,
            classes,
            schema,
        } => {
            if inputs.is_empty() {
                bail!(crisis_core::Error::Config("no input files given".into()));
            }
            let table = class_table(classes)?;
            let schema = schema.resolve();
            let mut parts = Vec::new();
            for path in inputs {
                manifest.input(path)?;
                let (corpus, report) = load_crisislex(path, &schema, &table)?;
                if report.skipped_empty_text > 0 {
                    log::warn!(
                        "{}: skipped {} rows with empty text",
                        path.display(),
                        report.skipped_empty_text
                    );
                }
                parts.push(corpus);
            }
            crisis_core::corpus::concat(&parts)?
        }
    };
    let mut spec = SplitSpec::new(cfg.split.train, cfg.split.val, cfg.split.test, cfg.seed)?;
    if !cfg.split.stratified {
        spec = spec.unstratified();
    }
    let split = manifest.timed("split", || split_indices(&corpus, &spec))?;
    create_dir(&req.out_dir)?;
    for p in Bundle::write(&req.out_dir, &corpus, &split)? {
        manifest.output(&p);
    }
    log::info!(
        "prepared {} tweets: {}/{}/{}",
        corpus.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let bundle = Bundle {
        dir: req.out_dir.clone(),
        corpus,
        split,
    };
    if let Some(source) = &req.table {
        let path = bundle.table_path();
        let table = match source {
            TableSource::File(p) => {
                manifest.input(p)?;
                EmbeddingTable::load(p, OovPolicy::Zero)?
            }
            TableSource::OneHot => EmbeddingTable::one_hot(&training_words(&bundle.part(Part::Train)))?,
            TableSource::Random(dim) => {
                manifest.seed("table", seed::derive(cfg.seed, "table"));
                EmbeddingTable::random(&training_words(&bundle.part(Part::Train)), *dim, cfg.seed)?
            }
        };
        table.save(&path)?;
        manifest.output(&path);
    }
    manifest.write(&req.out_dir)?;
    Ok(bundle)
}

// ---------------------------------------------------------------- vocab

/// Trains a subword vocabulary on the training split and stores it in the
/// bundle.
pub fn build_vocab(bundle_dir: &Path, size: usize) -> Result<Vocab> {
    let bundle = Bundle::load(bundle_dir)?;
    let mut manifest = RunManifest::new("vocab", &serde_json::json!({ "bundle": bundle_dir, "size": size }));
    manifest.input(&bundle_dir.join(crate::bundle::CORPUS))?;
    let vocab = manifest.timed("train_vocab", || train_vocab(&bundle.part(Part::Train), size))?;
    let path = bundle.vocab_path();
    vocab.save(&path)?;
    manifest.output(&path);
    log::info!("vocabulary of {} entries, hash {}", vocab.len(), vocab.hash());
    manifest.write(bundle_dir)?;
    Ok(vocab)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Transformer encoder with a `[CLS]` classification head.
    Encoder,
    Lr,
    Svm,
    Nb,
    Rnn,
    Cnn,
}

impl ModelKind {
    pub fn baseline(self) -> Option<BaselineKind> {
        Some(match self {
            ModelKind::Encoder => return None,
            ModelKind::Lr => BaselineKind::Lr,
            ModelKind::Svm => BaselineKind::Svm,
            ModelKind::Nb => BaselineKind::Nb,
            ModelKind::Rnn => BaselineKind::Rnn,
            ModelKind::Cnn => BaselineKind::Cnn,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Encoder => "encoder",
            m => m.baseline().expect("baseline").name(),
        }
    }
}

/// A model and, for baselines, its input representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub kind: ModelKind,
    pub representation: Option<Representation>,
}

impl ModelChoice {
    pub fn new(kind: ModelKind, representation: Option<Representation>) -> Self {
        Self { kind, representation }
    }

    /// The representation used, defaulting by model family.
    pub fn representation(&self) -> Option<Representation> {
        let b = self.kind.baseline()?;
        Some(self.representation.unwrap_or(if b.needs_sequence() {
            Representation::StaticSequence
        } else {
            Representation::StaticAverage
        }))
    }

    pub fn label(&self) -> String {
        match (self.kind, self.representation()) {
            (ModelKind::Encoder, _) => "encoder".into(),
            (k, Some(Representation::Crisis2vec)) => format!("{}:crisis2vec", k.name()),
            (k, Some(Representation::StaticSequence)) if k.baseline().is_some_and(|b| !b.needs_sequence()) => {
                format!("{}:static-sequence", k.name())
            }
            (k, _) => k.name().to_string(),
        }
    }
}

impl std::str::FromStr for ModelChoice {
    type Err = anyhow::Error;

    /// `kind` or `kind:representation`, e.g. `lr:crisis2vec`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rep) = s.split_once(':').map_or((s, None), |(k, r)| (k, Some(r)));
        let kind = <ModelKind as clap::ValueEnum>::from_str(kind, true)
            .map_err(|_| crisis_core::Error::Config(format!("unknown model '{kind}'")))?;
        let representation = rep
            .map(|r| {
                serde_json::from_value::<Representation>(serde_json::Value::String(r.to_string()))
                    .map_err(|_| crisis_core::Error::Config(format!("unknown representation '{r}'")))
            })
            .transpose()?;
        if kind == ModelKind::Encoder && representation.is_some() {
            bail!(crisis_core::Error::Config("the encoder takes no representation".into()));
        }
        Ok(Self { kind, representation })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub bundle: PathBuf,
    pub out_dir: PathBuf,
    pub model: ModelChoice,
    pub task: Task,
    /// Static word table; defaults to the bundle's.
    pub table: Option<PathBuf>,
    pub oov: OovPolicy,
    /// Trained encoder checkpoint for the crisis2vec representation.
    pub encoder: Option<PathBuf>,
    /// Subword vocabulary; defaults to the bundle's, and is trained on the
    /// training split if the bundle has none.
    pub vocab: Option<PathBuf>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub test: MetricsReport,
    pub val: Option<MetricsReport>,
    pub history: Vec<EpochRecord>,
    pub checkpoint: PathBuf,
}

/// Checks a request before any data is loaded or compute spent.
pub fn validate_request(req: &TrainRequest) -> Result<()> {
    req.config.train.validate()?;
    if let Some(b) = req.model.kind.baseline() {
        let rep = req.model.representation().expect("baselines have a representation");
        BaselineSpec::new(b, rep).validate()?;
        if rep == Representation::Crisis2vec && req.encoder.is_none() {
            bail!(crisis_core::Error::Config(
                "the crisis2vec representation needs --encoder <checkpoint>".into()
            ));
        }
    }
    Ok(())
}

fn resolve_vocab(req: &TrainRequest, bundle: &Bundle, manifest: &mut RunManifest) -> Result<Vocab> {
    let path = req.vocab.clone().unwrap_or_else(|| bundle.vocab_path());
    if path.exists() {
        manifest.input(&path)?;
        return Ok(Vocab::load(&path)?);
    }
    log::info!("no vocabulary at {}; training one on the training split", path.display());
    let vocab = manifest.timed("train_vocab", || train_vocab(&bundle.part(Part::Train), req.config.vocab_size))?;
    let out = req.out_dir.join(crate::bundle::VOCAB);
    vocab.save(&out)?;
    manifest.output(&out);
    Ok(vocab)
}

/// The bundle's vocabulary, or the one trained beside `checkpoint` when the
/// bundle has none.
fn default_vocab(bundle: &Bundle, checkpoint: Option<&Path>) -> PathBuf {
    let own = bundle.vocab_path();
    if own.exists() {
        return own;
    }
    checkpoint
        .and_then(Path::parent)
        .map(|d| d.join(crate::bundle::VOCAB))
        .filter(|p| p.exists())
        .unwrap_or(own)
}

fn tokenize_all(corpus: &LabeledCorpus, vocab: &Vocab, max_len: usize) -> Vec<TokenSequence> {
    corpus.tweets().iter().map(|t| tokenize(&t.text, vocab, max_len)).collect()
}

fn texts(corpus: &LabeledCorpus) -> Vec<&str> {
    corpus.tweets().iter().map(|t| t.text.as_str()).collect()
}

/// A trained classifier checkpoint with its vocabulary.
pub struct LoadedClassifier {
    pub model: SequenceClassifier,
    pub checkpoint: Checkpoint,
}

pub fn load_classifier(path: &Path) -> Result<LoadedClassifier> {
    let checkpoint = Checkpoint::load(path)?;
    if checkpoint.kind != KIND_CLASSIFIER {
        bail!(crisis_core::Error::Config(format!(
            "{} holds a '{}' model, not an encoder classifier",
            path.display(),
            checkpoint.kind
        )));
    }
    let config: EncoderConfig = checkpoint.config_as()?;
    let num_classes = checkpoint.metadata["num_classes"]
        .as_u64()
        .ok_or_else(|| crisis_core::Error::Checkpoint("metadata lacks num_classes".into()))? as usize;
    let mut model = SequenceClassifier::init(&config, num_classes)?;
    checkpoint.load_into(&mut model)?;
    Ok(LoadedClassifier { model, checkpoint })
}

/// Refuses a vocabulary whose hash differs from the one recorded at training.
pub fn check_vocab(checkpoint: &Checkpoint, vocab: &Vocab) -> Result<()> {
    match &checkpoint.vocab_hash {
        Some(h) if *h != vocab.hash() => bail!(crisis_core::Error::Config(format!(
            "vocabulary hash {} does not match the checkpoint's {h}",
            vocab.hash()
        ))),
        _ => Ok(()),
    }
}

fn train_encoder(
    req: &TrainRequest,
    bundle: &Bundle,
    manifest: &mut RunManifest,
) -> Result<TrainOutcome> {
    let cfg = &req.config;
    let vocab = resolve_vocab(req, bundle, manifest)?;
    let enc = cfg.encoder.resolve(vocab.len(), cfg.seed)?;
    let num_classes = bundle.corpus.output_classes(req.task);
    let (train, val, test) = (bundle.part(Part::Train), bundle.part(Part::Val), bundle.part(Part::Test));
    let (xt, xv, xe) = manifest.timed("tokenize", || {
        (
            tokenize_all(&train, &vocab, enc.max_positions),
            tokenize_all(&val, &vocab, enc.max_positions),
            tokenize_all(&test, &vocab, enc.max_positions),
        )
    });
    let (yt, yv, ye) = (train.labels(req.task), val.labels(req.task), test.labels(req.task));
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        task: req.task,
        ..cfg.train.clone()
    };
    manifest.seed("init", seed::derive(cfg.seed, seed::ns::INIT));
    manifest.seed("train", train_cfg.seed);
    let model = SequenceClassifier::init(&enc, num_classes)?;
    log::info!(
        "training encoder ({} parameters) on {} tweets, {} classes",
        enc.parameter_count(),
        xt.len(),
        num_classes
    );
    let data = FitData {
        train: &xt,
        train_labels: &yt,
        val: &xv,
        val_labels: &yv,
        num_classes,
    };
    let outcome = manifest.timed("fit", || fit(model, &data, &train_cfg, |_| {}))?;
    let history_path = req.out_dir.join(HISTORY);
    write_file(&history_path, history_to_jsonl(&outcome.history), manifest)?;

    let ckpt = Checkpoint::from_model(KIND_CLASSIFIER, &enc, Some(vocab.hash()), &outcome.model)?.with_metadata(
        serde_json::json!({
            "num_classes": num_classes,
            "task": req.task,
            "class_names": bundle.corpus.class_names(),
        }),
    );
    let ckpt_path = req.out_dir.join(CHECKPOINT);
    ckpt.save(&ckpt_path)?;
    manifest.output(&ckpt_path);

    let test_report = manifest.timed("evaluate", || evaluate(&outcome.model, &xe, &ye, num_classes, EVAL_BATCH))?;
    let val_report = if xv.is_empty() {
        None
    } else {
        Some(evaluate(&outcome.model, &xv, &yv, num_classes, EVAL_BATCH)?)
    };
    Ok(TrainOutcome {
        test: test_report,
        val: val_report,
        history: outcome.history,
        checkpoint: ckpt_path,
    })
}

/// Inputs needed to turn texts into baseline features.
pub struct FeatureSource {
    pub representation: Representation,
    pub table: Option<EmbeddingTable>,
    pub encoder: Option<(SequenceClassifier, Vocab)>,
    pub max_words: usize,
}

impl FeatureSource {
    pub fn load(
        representation: Representation,
        table: Option<&Path>,
        oov: OovPolicy,
        encoder: Option<&Path>,
        vocab: Option<&Path>,
        max_words: usize,
        manifest: &mut RunManifest,
    ) -> Result<Self> {
        let mut src = Self {
            representation,
            table: None,
            encoder: None,
            max_words,
        };
        match representation {
            Representation::StaticAverage | Representation::StaticSequence => {
                let path = table.ok_or_else(|| {
                    crisis_core::Error::Config("static representations need a word table (--table)".into())
                })?;
                manifest.input(path)?;
                src.table = Some(EmbeddingTable::load(path, oov)?);
            }
            Representation::Crisis2vec => {
                let path = encoder.ok_or_else(|| {
                    crisis_core::Error::Config("the crisis2vec representation needs --encoder".into())
                })?;
                manifest.input(path)?;
                let loaded = load_classifier(path)?;
                let vocab_path = vocab.ok_or_else(|| crisis_core::Error::Config("crisis2vec needs a vocabulary".into()))?;
                manifest.input(vocab_path)?;
                let vocab = Vocab::load(vocab_path)?;
                check_vocab(&loaded.checkpoint, &vocab)?;
                src.encoder = Some((loaded.model, vocab));
            }
        }
        Ok(src)
    }

    pub fn lookup(&self) -> Option<Arc<Array2<f64>>> {
        (self.representation == Representation::StaticSequence)
            .then(|| self.table.as_ref().expect("static table").lookup_matrix())
    }

    pub fn features(&self, texts: &[&str]) -> Result<Features> {
        Ok(match self.representation {
            Representation::StaticAverage => Features::Fixed(doc_matrix(texts, self.table.as_ref().expect("table"))),
            Representation::StaticSequence => {
                let table = self.table.as_ref().expect("table");
                Features::Sequence {
                    lookup: self.lookup().expect("sequence lookup"),
                    docs: texts.iter().map(|t| doc_ids(t, table, self.max_words)).collect(),
                }
            }
            Representation::Crisis2vec => {
                let (model, vocab) = self.encoder.as_ref().expect("encoder");
                let max_len = model.encoder.config.max_positions;
                let seqs: Vec<TokenSequence> = texts.iter().map(|t| tokenize(t, vocab, max_len)).collect();
                let vectors = embed_sequences(&model.encoder, &seqs, EVAL_BATCH)?;
                let dim = model.encoder.config.hidden_dim;
                let mut x = Array2::zeros((vectors.len(), dim));
                for (i, v) in vectors.iter().enumerate() {
                    x.row_mut(i).assign(v);
                }
                Features::Fixed(x)
            }
        })
    }
}

fn train_baseline(req: &TrainRequest, bundle: &Bundle, manifest: &mut RunManifest) -> Result<TrainOutcome> {
    let cfg = &req.config;
    let kind = req.model.kind.baseline().expect("baseline model");
    let representation = req.model.representation().expect("baseline representation");
    let table_path = req.table.clone().unwrap_or_else(|| bundle.table_path());
    let vocab_path = req.vocab.clone().unwrap_or_else(|| default_vocab(bundle, req.encoder.as_deref()));
    let source = FeatureSource::load(
        representation,
        Some(&table_path),
        req.oov,
        req.encoder.as_deref(),
        Some(&vocab_path),
        cfg.baseline.max_words,
        manifest,
    )?;
    let mut spec = BaselineSpec {
        kind,
        representation,
        params: cfg.baseline.clone(),
    };
    spec.params.train.seed = cfg.seed;
    spec.params.train.task = req.task;
    manifest.seed("train", cfg.seed);
    let num_classes = bundle.corpus.output_classes(req.task);
    let (train, val, test) = (bundle.part(Part::Train), bundle.part(Part::Val), bundle.part(Part::Test));
    let (xt, xv, xe) = manifest.timed("features", || -> Result<_> {
        Ok((
            source.features(&texts(&train))?,
            source.features(&texts(&val))?,
            source.features(&texts(&test))?,
        ))
    })?;
    log::info!("fitting {} on {} tweets ({representation})", kind.name(), xt.len());
    let model = manifest.timed("fit", || fit_baseline(&spec, &xt, &train.labels(req.task), num_classes))?;
    let input_dim = match &xt {
        Features::Fixed(x) => x.ncols(),
        Features::Sequence { lookup, .. } => lookup.ncols(),
    };
    let ckpt = Checkpoint::from_model(KIND_BASELINE, &spec, None, &model)?.with_metadata(serde_json::json!({
        "num_classes": num_classes,
        "task": req.task,
        "input_dim": input_dim,
        "representation": representation,
        "table": table_path,
        "encoder": req.encoder,
        "vocab": vocab_path,
    }));
    let ckpt_path = req.out_dir.join(CHECKPOINT);
    ckpt.save(&ckpt_path)?;
    manifest.output(&ckpt_path);
    let report = |x: &Features, part: &LabeledCorpus| -> Result<MetricsReport> {
        let (pred, _) = predict_baseline(&model, x)?;
        Ok(MetricsReport::evaluate(&pred, &part.labels(req.task), num_classes)?)
    };
    let test_report = manifest.timed("evaluate", || report(&xe, &test))?;
    let val_report = if val.is_empty() { None } else { Some(report(&xv, &val)?) };
    Ok(TrainOutcome {
        test: test_report,
        val: val_report,
        history: Vec::new(),
        checkpoint: ckpt_path,
    })
}

/// Trains and evaluates without writing a manifest (shared with the grid).
pub fn train_inner(req: &TrainRequest, manifest: &mut RunManifest) -> Result<TrainOutcome> {
    validate_request(req)?;
    let bundle = Bundle::load(&req.bundle)?;
    manifest.input(&req.bundle.join(crate::bundle::CORPUS))?;
    create_dir(&req.out_dir)?;
    let outcome = match req.model.kind {
        ModelKind::Encoder => train_encoder(req, &bundle, manifest)?,
        _ => train_baseline(req, &bundle, manifest)?,
    };
    write_file(&req.out_dir.join(REPORT), outcome.test.to_text(true), manifest)?;
    if let Some(v) = &outcome.val {
        write_file(&req.out_dir.join(VAL_REPORT), v.to_text(true), manifest)?;
    }
    log::info!(
        "test accuracy {}, macro-F1 {:.4}",
        outcome.test.accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        outcome.test.macro_f1
    );
    Ok(outcome)
}

pub fn train(req: &TrainRequest) -> Result<TrainOutcome> {
    let mut manifest = RunManifest::new("train", req);
    manifest.seed("root", req.config.seed);
    let outcome = train_inner(req, &mut manifest)?;
    manifest.write(&req.out_dir)?;
    Ok(outcome)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub checkpoint: PathBuf,
    pub bundle: PathBuf,
    pub part: String,
    pub vocab: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub encoder: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Scores a saved model on one split of a bundle.
pub fn eval(req: &EvalRequest, part: Part) -> Result<MetricsReport> {
    let mut manifest = RunManifest::new("eval", req);
    let bundle = Bundle::load(&req.bundle)?;
    manifest.input(&req.checkpoint)?;
    let checkpoint = Checkpoint::load(&req.checkpoint)?;
    let task: Task = serde_json::from_value(checkpoint.metadata["task"].clone())
        .map_err(|_| crisis_core::Error::Checkpoint("metadata lacks the task".into()))?;
    let corpus = bundle.part(part);
    let truth = corpus.labels(task);
    let num_classes = bundle.corpus.output_classes(task);
    let meta_path = |key: &str| checkpoint.metadata[key].as_str().map(PathBuf::from);
    let report = match checkpoint.kind.as_str() {
        KIND_CLASSIFIER => {
            let loaded = load_classifier(&req.checkpoint)?;
            let vocab_path = req.vocab.clone().unwrap_or_else(|| default_vocab(&bundle, Some(&req.checkpoint)));
            manifest.input(&vocab_path)?;
            let vocab = Vocab::load(&vocab_path)?;
            check_vocab(&loaded.checkpoint, &vocab)?;
            let seqs = tokenize_all(&corpus, &vocab, loaded.model.encoder.config.max_positions);
            let (pred, _) = predict(&loaded.model, &seqs, EVAL_BATCH)?;
            MetricsReport::evaluate(&pred, &truth, num_classes)?
        }
        KIND_BASELINE => {
            let spec: BaselineSpec = checkpoint.config_as()?;
            let input_dim = checkpoint.metadata["input_dim"].as_u64().unwrap_or(0) as usize;
            let table = req.table.clone().or_else(|| meta_path("table"));
            let encoder = req.encoder.clone().or_else(|| meta_path("encoder"));
            let vocab = req.vocab.clone().or_else(|| meta_path("vocab"));
            let source = FeatureSource::load(
                spec.representation,
                table.as_deref(),
                OovPolicy::Zero,
                encoder.as_deref(),
                vocab.as_deref(),
                spec.params.max_words,
                &mut manifest,
            )?;
            let mut model = BaselineModel::blank(&spec, input_dim, num_classes, source.lookup(), spec.params.train.seed)?;
            checkpoint.load_into(&mut model)?;
            let x = source.features(&texts(&corpus))?;
            let (pred, _) = predict_baseline(&model, &x)?;
            MetricsReport::evaluate(&pred, &truth, num_classes)?
        }
        other => bail!(crisis_core::Error::Checkpoint(format!("unknown model kind '{other}'"))),
    };
    create_dir(&req.out_dir)?;
    write_file(&req.out_dir.join(format!("{part}_{REPORT}")), report.to_text(true), &mut manifest)?;
    manifest.write(&req.out_dir)?;
    Ok(report)
}

// ---------------------------------------------------------------- embed

/// Reads tweets one per line, as `text` or `id<TAB>text`. Ids default to
/// the 1-based line number.
pub fn read_tweet_lines(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(n, l)| match l.split_once('\t') {
            Some((id, t)) => (id.to_string(), t.to_string()),
            None => ((n + 1).to_string(), l.to_string()),
        })
        .collect())
}

/// Writes one crisis2vec embedding per input line, in input order.
pub fn embed(checkpoint: &Path, vocab: &Path, input: &Path, output: &Path) -> Result<usize> {
    let mut manifest = RunManifest::new(
        "embed",
        &serde_json::json!({ "checkpoint": checkpoint, "vocab": vocab, "input": input, "output": output }),
    );
    manifest.input(checkpoint)?;
    manifest.input(vocab)?;
    manifest.input(input)?;
    let loaded = load_classifier(checkpoint)?;
    let vocab = Vocab::load(vocab)?;
    check_vocab(&loaded.checkpoint, &vocab)?;
    let rows = read_tweet_lines(input)?;
    let max_len = loaded.model.encoder.config.max_positions;
    let mut embeddings = Vec::with_capacity(rows.len());
    let seqs: Vec<TokenSequence> = rows.iter().map(|(_, t)| tokenize(t, &vocab, max_len)).collect();
    for (n, seq) in seqs.iter().enumerate() {
        if seq.real_len() < 2 {
            bail!(crisis_core::Error::Data {
                context: format!("{}: line {}", input.display(), n + 1),
                message: "tweet has no tokens to pool".into(),
            });
        }
    }
    let vectors = manifest.timed("encode", || embed_sequences(&loaded.model.encoder, &seqs, EVAL_BATCH))?;
    for ((id, _), vector) in rows.into_iter().zip(vectors) {
        embeddings.push(TweetEmbedding { id, vector });
    }
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_embeddings(output, &loaded.checkpoint.hash()?, &embeddings)?;
    manifest.output(output);
    manifest.write(output.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")))?;
    Ok(embeddings.len())
}

// ---------------------------------------------------------------- search

/// Random search over optimizer, learning rate and batch size for the
/// encoder, scored on the validation split.
pub fn search(bundle_dir: &Path, task: Task, vocab: Option<&Path>, config: &RunConfig, out_dir: &Path) -> Result<Leaderboard> {
    let mut manifest = RunManifest::new("search", config);
    manifest.seed("root", config.seed);
    manifest.seed("search", seed::derive(config.seed, seed::ns::SEARCH));
    config.search.validate()?;
    let bundle = Bundle::load(bundle_dir)?;
    manifest.input(&bundle_dir.join(crate::bundle::CORPUS))?;
    create_dir(out_dir)?;
    let req = TrainRequest {
        bundle: bundle_dir.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        model: ModelChoice::new(ModelKind::Encoder, None),
        task,
        table: None,
        oov: OovPolicy::Zero,
        encoder: None,
        vocab: vocab.map(Path::to_path_buf),
        config: config.clone(),
    };
    let vocab = resolve_vocab(&req, &bundle, &mut manifest)?;
    let num_classes = bundle.corpus.output_classes(task);
    let max_len = config.encoder.max_len;
    let (train, val) = (bundle.part(Part::Train), bundle.part(Part::Val));
    let (xt, xv) = (tokenize_all(&train, &vocab, max_len), tokenize_all(&val, &vocab, max_len));
    let (yt, yv) = (train.labels(task), val.labels(task));
    let base = TrainConfig {
        task,
        ..config.train.clone()
    };
    let board = manifest.timed("search", || {
        hyperparam_search(&config.search, &base, config.seed, |tc, _| {
            let enc = config.encoder.resolve(vocab.len(), tc.seed)?;
            let model = SequenceClassifier::init(&enc, num_classes)?;
            let data = FitData {
                train: &xt,
                train_labels: &yt,
                val: &xv,
                val_labels: &yv,
                num_classes,
            };
            Ok(fit(model, &data, tc, |_| {})?.history)
        })
    })?;
    write_file(&out_dir.join(LEADERBOARD), board.to_json(), &mut manifest)?;
    manifest.write(out_dir)?;
    Ok(board)
}
