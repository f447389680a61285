//! Argument parsing and dispatch.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use crisis_core::baselines::{OovPolicy, Representation};
use crisis_core::corpus::Task;
use crisis_core::train::Optimizer;

use crate::bundle::Part;
use crate::config::{Preset, RunConfig};
use crate::grid::{consolidate_dir, run_grid, GridRequest};
use crate::pipeline::{
    build_vocab, embed, eval, prepare, search, train, EvalRequest, ModelChoice, ModelKind, PrepareRequest,
    SchemaArgs, Source, TableSource, TrainRequest,
};

/// Default output root when neither `--out-dir` nor the variable is set.
pub const DEFAULT_OUT_ROOT: &str = "runs";
pub const OUT_ENV: &str = "CRISIS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "crisis", version, about = "Crisis tweet detection and recognition pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Root seed; every component derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $CRISIS_OUT_DIR/<command>, else runs/<command>).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset bundle from labeled files or a synthetic generator.
    Prepare(PrepareArgs),
    /// Train a subword vocabulary on a bundle's training split.
    Vocab(VocabArgs),
    /// Train and test one model.
    Train(TrainArgs),
    /// Random hyperparameter search for the encoder.
    Search(SearchArgs),
    /// Run every task × bundle × model cell and consolidate the results.
    Grid(GridArgs),
    /// Write crisis2vec embeddings for a file of tweets.
    Embed(EmbedArgs),
    /// Score a saved model on a bundle split.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Labeled tweet files (comma or tab separated, with a header).
    #[arg(long = "input")]
    pub inputs: Vec<PathBuf>,
    /// Class table: c6, c36 or a table file.
    #[arg(long, default_value = "c6")]
    pub classes: String,
    #[arg(long)]
    pub id_column: Option<String>,
    #[arg(long)]
    pub text_column: Option<String>,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Event for rows labeled on-topic in per-event files.
    #[arg(long)]
    pub event: Option<String>,
    /// Dataset tag for rows whose class has none.
    #[arg(long)]
    pub source_tag: Option<String>,
    /// Generate a synthetic corpus instead of reading files.
    #[arg(long, conflicts_with = "inputs")]
    pub synthetic: bool,
    #[arg(long)]
    pub synth_classes: Option<usize>,
    #[arg(long)]
    pub docs_per_class: Option<usize>,
    #[arg(long)]
    pub marker_rate: Option<f64>,
    #[arg(long)]
    pub order_sensitive: bool,
    /// Split percentages, e.g. 90/5/5.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub unstratified: bool,
    /// Static word table for the bundle: a file, `one-hot` or `random:<dim>`.
    #[arg(long)]
    pub static_table: Option<String>,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    #[arg(long)]
    pub word_dropout: Option<f64>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// encoder, lr, svm, nb, rnn or cnn.
    #[arg(long, value_enum, default_value = "encoder")]
    pub model: ModelKind,
    /// Baseline input: static-average, static-sequence or crisis2vec.
    #[arg(long, value_parser = parse_representation)]
    pub representation: Option<Representation>,
    /// Static word table (default: the bundle's table.txt).
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Vector for unknown words: zero or mean.
    #[arg(long, value_parser = parse_oov, default_value = "zero")]
    pub oov: OovPolicy,
    /// Trained encoder checkpoint, for the crisis2vec representation.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub task: Option<Task>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Prepared bundles; deltas compare the first with each later one.
    #[arg(long = "bundle")]
    pub bundles: Vec<PathBuf>,
    #[arg(long = "task")]
    pub tasks: Vec<Task>,
    /// Models as `kind` or `kind:representation`, e.g. `lr:crisis2vec`.
    #[arg(long = "model")]
    pub models: Vec<ModelChoice>,
    /// Only rebuild the table from cells already in the output directory.
    #[arg(long)]
    pub consolidate_only: bool,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// One tweet per line, optionally `id<TAB>text`.
    #[arg(long)]
    pub input: PathBuf,
    /// Embedding file (default: <out-dir>/embeddings.txt).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Part,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub encoder: Option<PathBuf>,
}

fn parse_representation(s: &str) -> std::result::Result<Representation, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown representation '{s}' (static-average, static-sequence, crisis2vec)"))
}

fn parse_oov(s: &str) -> std::result::Result<OovPolicy, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown OOV policy '{s}' (zero, mean)"))
}

fn parse_split(s: &str) -> Result<(u32, u32, u32)> {
    let parts: Vec<&str> = s.split('/').collect();
    let bad = || crisis_core::Error::Config(format!("split '{s}' is not of the form 90/5/5"));
    if parts.len() != 3 {
        return Err(bad().into());
    }
    let n = |p: &str| p.trim().parse::<u32>().map_err(|_| bad());
    Ok((n(parts[0])?, n(parts[1])?, n(parts[2])?))
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
            cfg.baseline.train.epochs = e;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(o) = self.optimizer {
            cfg.train.optimizer = o;
        }
        if let Some(p) = self.word_dropout {
            cfg.train.word_dropout = p;
        }
        if let Some(p) = self.preset {
            cfg.encoder.preset = p;
        }
    }
}

fn out_dir(common: &Common, command: &str) -> PathBuf {
    common.out_dir.clone().unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
            .join(command)
    })
}

fn resolved_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let mut cfg = resolved_config(common)?;
    match cli.command {
        Command::Prepare(a) => {
            if a.synthetic {
                if let Some(c) = a.synth_classes {
                    cfg.synth.num_classes = c;
                }
                if let Some(d) = a.docs_per_class {
                    cfg.synth.docs_per_class = d;
                }
                if let Some(r) = a.marker_rate {
                    cfg.synth.marker_rate = r;
                }
                cfg.synth.order_sensitive |= a.order_sensitive;
                if common.seed.is_some() {
                    cfg.synth.seed = cfg.seed;
                }
            }
            if let Some(s) = &a.split {
                let (train, val, test) = parse_split(s)?;
                cfg.split.train = train;
                cfg.split.val = val;
                cfg.split.test = test;
            }
            if a.unstratified {
                cfg.split.stratified = false;
            }
            let source = if a.synthetic {
                Source::Synthetic
            } else {
                Source::Files {
                    inputs: a.inputs,
                    classes: a.classes,
                    schema: SchemaArgs {
                        id: a.id_column,
                        text: a.text_column,
                        label: a.label_column,
                        event: a.event,
                        source_tag: a.source_tag,
                    },
                }
            };
            let table = a.static_table.as_deref().map(str::parse::<TableSource>).transpose()?;
            let bundle = prepare(&PrepareRequest {
                source,
                table,
                out_dir: out_dir(common, "prepare"),
                config: cfg,
            })?;
            println!(
                "{}\t{} tweets\ttrain {}\tval {}\ttest {}",
                bundle.dir.display(),
                bundle.corpus.len(),
                bundle.split.train.len(),
                bundle.split.val.len(),
                bundle.split.test.len()
            );
        }
        Command::Vocab(a) => {
            let vocab = build_vocab(&a.bundle, a.size.unwrap_or(cfg.vocab_size))?;
            println!("{}\t{} entries\t{}", a.bundle.join(crate::bundle::VOCAB).display(), vocab.len(), vocab.hash());
        }
        Command::Train(a) => {
            a.overrides.apply(&mut cfg);
            if let Some(t) = a.task {
                cfg.train.task = t;
            }
            let req = TrainRequest {
                bundle: a.bundle,
                out_dir: out_dir(common, "train"),
                model: ModelChoice::new(a.model, a.representation),
                task: cfg.train.task,
                table: a.table,
                oov: a.oov,
                encoder: a.encoder,
                vocab: a.vocab,
                config: cfg,
            };
            let outcome = train(&req)?;
            print_report(&outcome.test);
        }
        Command::Search(a) => {
            a.overrides.apply(&mut cfg);
            if let Some(t) = a.task {
                cfg.train.task = t;
            }
            if let Some(b) = a.budget {
                cfg.search.budget = b;
            }
            if let Some(t) = a.trials {
                cfg.search.trials_per_config = t;
            }
            if let Some(e) = a.overrides.epochs {
                cfg.search.epochs_per_trial = e;
            }
            let task = cfg.train.task;
            let dir = out_dir(common, "search");
            let board = search(&a.bundle, task, a.vocab.as_deref(), &cfg, &dir)?;
            for e in &board.entries {
                println!(
                    "{}\tlr {}\tbatch {}\tF1 {:.4} ± {:.4}\tacc {:.4}",
                    e.config.optimizer, e.config.learning_rate, e.config.batch_size, e.mean_macro_f1, e.std_macro_f1, e.mean_accuracy
                );
            }
        }
        Command::Grid(a) => {
            let dir = out_dir(common, "grid");
            let table = if a.consolidate_only {
                consolidate_dir(&dir)?
            } else {
                a.overrides.apply(&mut cfg);
                let tasks = if a.tasks.is_empty() {
                    vec![Task::Detection, Task::Recognition]
                } else {
                    a.tasks
                };
                run_grid(&GridRequest {
                    bundles: a.bundles,
                    tasks,
                    models: a.models,
                    out_dir: dir,
                    config: cfg,
                })?
            };
            print!("{}", table.to_tsv());
        }
        Command::Embed(a) => {
            let output = a.output.unwrap_or_else(|| out_dir(common, "embed").join("embeddings.txt"));
            let n = embed(&a.checkpoint, &a.vocab, &a.input, &output)?;
            println!("{}\t{n} embeddings", output.display());
        }
        Command::Eval(a) => {
            let req = EvalRequest {
                checkpoint: a.checkpoint,
                bundle: a.bundle,
                part: a.split.to_string(),
                vocab: a.vocab,
                table: a.table,
                encoder: a.encoder,
                out_dir: out_dir(common, "eval"),
            };
            let report = eval(&req, a.split)?;
            print_report(&report);
        }
    }
    Ok(())
}

fn print_report(r: &crisis_core::metrics::MetricsReport) {
    println!(
        "accuracy {}\tmacro_f1 {:.4}\tn {}",
        r.accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        r.macro_f1,
        r.n
    );
}

/// Process exit status for an error: 1 I/O, 2 configuration, 3 data,
/// 4 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use crisis_core::ErrorKind;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<crisis_core::Error>() {
            return match e.kind() {
                ErrorKind::Io => 1,
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 3;
        }
    }
    2
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}


#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }
}
