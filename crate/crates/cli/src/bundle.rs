//! On-disk dataset bundle written by `prepare`:
//!
//! ```text
//! corpus.tsv        canonical corpus (id, text, label, source)
//! classes.txt       class names, index 0 = unrelated
//! split/{train,val,test}.idx   row indices into corpus.tsv, one per line
//! table.txt         optional static word vectors
//! vocab.txt         subword vocabulary (after `vocab`)
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use crisis_core::corpus::{LabeledCorpus, SplitIndices};

pub const CORPUS: &str = "corpus.tsv";
pub const CLASSES: &str = "classes.txt";
pub const SPLIT_DIR: &str = "split";
pub const TABLE: &str = "table.txt";
pub const VOCAB: &str = "vocab.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Val, Part::Test];

    pub fn name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct Bundle {
    pub dir: PathBuf,
    pub corpus: LabeledCorpus,
    pub split: SplitIndices,
}

/// Short name of a bundle: its directory name.
pub fn bundle_name(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| "bundle".to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn index_path(dir: &Path, part: Part) -> PathBuf {
    dir.join(SPLIT_DIR).join(format!("{}.idx", part.name()))
}

fn indices_text(idx: &[usize]) -> String {
    idx.iter().map(|i| format!("{i}\n")).collect()
}

fn read_indices(path: &Path, len: usize) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let i: usize = l.trim().parse().map_err(|_| {
                crisis_core::Error::Data {
                    context: format!("{}: line {}", path.display(), n + 1),
                    message: format!("'{l}' is not an index"),
                }
            })?;
            if i >= len {
                return Err(crisis_core::Error::Data {
                    context: format!("{}: line {}", path.display(), n + 1),
                    message: format!("index {i} outside corpus of {len}"),
                }
                .into());
            }
            Ok(i)
        })
        .collect()
}

impl Bundle {
    pub fn write(dir: &Path, corpus: &LabeledCorpus, split: &SplitIndices) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir.join(SPLIT_DIR)).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        let corpus_path = dir.join(CORPUS);
        let mut buf = Vec::new();
        corpus.write_tsv(&mut buf)?;
        std::fs::write(&corpus_path, buf)?;
        written.push(corpus_path);
        let classes = dir.join(CLASSES);
        std::fs::write(&classes, corpus.class_names().join("\n") + "\n")?;
        written.push(classes);
        for (part, idx) in Part::ALL.into_iter().zip([&split.train, &split.val, &split.test]) {
            let p = index_path(dir, part);
            std::fs::write(&p, indices_text(idx))?;
            written.push(p);
        }
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let names_path = dir.join(CLASSES);
        let names: Vec<String> = std::fs::read_to_string(&names_path)
            .with_context(|| format!("{} is not a prepared bundle (no {CLASSES})", dir.display()))?
            .lines()
            .map(str::to_string)
            .collect();
        let corpus_path = dir.join(CORPUS);
        let file = std::fs::File::open(&corpus_path).with_context(|| format!("opening {}", corpus_path.display()))?;
        let corpus = LabeledCorpus::read_tsv(file, names).with_context(|| format!("in {}", corpus_path.display()))?;
        let n = corpus.len();
        let split = SplitIndices {
            train: read_indices(&index_path(dir, Part::Train), n)?,
            val: read_indices(&index_path(dir, Part::Val), n)?,
            test: read_indices(&index_path(dir, Part::Test), n)?,
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            corpus,
            split,
        })
    }

    pub fn part(&self, part: Part) -> LabeledCorpus {
        let idx = match part {
            Part::Train => &self.split.train,
            Part::Val => &self.split.val,
            Part::Test => &self.split.test,
        };
        self.corpus.select(idx)
    }

    pub fn name(&self) -> String {
        bundle_name(&self.dir)
    }

    pub fn table_path(&self) -> PathBuf {
        self.dir.join(TABLE)
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.dir.join(VOCAB)
    }
}
