//! Benchmark classifiers over static word vectors or pooled encoder
//! embeddings.

mod cnn;
mod linear;
mod lstm;

use std::fmt;
use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use cnn::{CnnClassifier, CnnConfig, ConvLayer};
pub use linear::{GaussianNb, LinearParams, LinearSvm, LogisticRegression, Standardizer, NB_VARIANCE_FLOOR};
pub use lstm::{LstmClassifier, LstmConfig, LstmLayer};

use crate::params::{ParamView, ParamViewMut, Parameterized};
use crate::seed::{self, Rng};
use crate::tokenizer::pretokenize;
use crate::train::{argmax_rows, fit, FitData, TrainConfig, Trainable};
use crate::{Error, Result};

/// Vector returned for words missing from a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    #[default]
    Zero,
    /// Mean of every vector in the table.
    Mean,
}

/// Word vectors in the common `word v1 ... vk` text format.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    oov: OovPolicy,
    oov_vector: Array1<f64>,
}

impl EmbeddingTable {
    pub fn new(entries: Vec<(String, Vec<f64>)>, policy: OovPolicy) -> Result<Self> {
        let dim = entries.first().map(|(_, v)| v.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::data("embedding table", "no vectors"));
        }
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(Error::data(
                    "embedding table",
                    format!("'{word}' has {} values, expected {dim}", vector.len()),
                ));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::data("embedding table", format!("'{word}' has a non-finite value")));
            }
            match index.get(&word) {
                Some(&i) => rows[i] = vector,
                None => {
                    index.insert(word.clone(), words.len());
                    words.push(word);
                    rows.push(vector);
                }
            }
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let vectors = Array2::from_shape_vec((words.len(), dim), flat).expect("rows share one width");
        let oov_vector = match policy {
            OovPolicy::Zero => Array1::zeros(dim),
            OovPolicy::Mean => vectors.mean_axis(ndarray::Axis(0)).expect("non-empty table"),
        };
        Ok(Self {
            words,
            index,
            vectors,
            oov: policy,
            oov_vector,
        })
    }

    /// Parses the text format. An optional first line `count dim` is
    /// accepted; a repeated word keeps its last vector.
    pub fn parse(text: &str, policy: OovPolicy) -> Result<Self> {
        let mut entries = Vec::new();
        let mut dim: Option<usize> = None;
        let mut seen = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if n == 0 && fields.len() == 2 {
                if let (Ok(_), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                    dim = Some(d);
                    continue;
                }
            }
            let values: std::result::Result<Vec<f64>, _> = fields[1..].iter().map(|v| v.parse::<f64>()).collect();
            let values = values.map_err(|e| Error::data(format!("embedding table line {lineno}"), e.to_string()))?;
            match dim {
                Some(d) if d != values.len() => {
                    return Err(Error::data(
                        format!("embedding table line {lineno}"),
                        format!("{} values, expected {d}", values.len()),
                    ))
                }
                None if values.is_empty() => {
                    return Err(Error::data(format!("embedding table line {lineno}"), "no values"));
                }
                None => dim = Some(values.len()),
                _ => {}
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("embedding table line {lineno}"), "non-finite value"));
            }
            let word = fields[0].to_string();
            if let Some(prev) = seen.insert(word.clone(), lineno) {
                log::warn!("embedding table: '{word}' on line {lineno} replaces line {prev}");
            }
            entries.push((word, values));
        }
        Self::new(entries, policy)
    }

    pub fn load(path: &Path, policy: OovPolicy) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, policy)
    }

    /// Text format with a `count dim` header; reads back bit-identically.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (w, row) in self.words.iter().zip(self.vectors.outer_iter()) {
            out.push_str(w);
            for v in row {
                out.push(' ');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// One-hot vectors: a bag-of-words table.
    pub fn one_hot<S: AsRef<str>>(words: &[S]) -> Result<Self> {
        let n = words.len();
        let entries = words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                (w.as_ref().to_string(), v)
            })
            .collect();
        Self::new(entries, OovPolicy::Zero)
    }

    /// Standard normal vectors scaled by `1/sqrt(dim)`.
    pub fn random<S: AsRef<str>>(words: &[S], dim: usize, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed::derive(seed, "table"));
        let dist = rand_distr::Normal::new(0.0, 1.0 / (dim.max(1) as f64).sqrt()).expect("positive std");
        let entries = words
            .iter()
            .map(|w| {
                let v = (0..dim).map(|_| rand_distr::Distribution::sample(&dist, &mut rng)).collect();
                (w.as_ref().to_string(), v)
            })
            .collect();
        Self::new(entries, OovPolicy::Zero)
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn get(&self, word: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.index_of(word).map(|i| self.vectors.row(i))
    }

    /// Vector for `word`, falling back to the OOV policy.
    pub fn lookup(&self, word: &str) -> ndarray::ArrayView1<'_, f64> {
        self.get(word).unwrap_or_else(|| self.oov_vector.view())
    }

    pub fn oov_vector(&self) -> ndarray::ArrayView1<'_, f64> {
        self.oov_vector.view()
    }

    /// All vectors plus the OOV vector as the last row, for sequence models.
    pub fn lookup_matrix(&self) -> Arc<Array2<f64>> {
        let mut m = Array2::zeros((self.len() + 1, self.dim()));
        m.slice_mut(ndarray::s![..self.len(), ..]).assign(&self.vectors);
        m.row_mut(self.len()).assign(&self.oov_vector);
        Arc::new(m)
    }
}

/// Words of a document as the baselines see them.
pub fn doc_words(text: &str) -> Vec<String> {
    pretokenize(text)
}

/// Unweighted mean of the document's word vectors. Unknown words contribute
/// the OOV vector; an empty document maps to the OOV vector.
pub fn doc_vector(text: &str, table: &EmbeddingTable) -> Array1<f64> {
    let words = doc_words(text);
    if words.is_empty() {
        return table.oov_vector().to_owned();
    }
    let mut sum = Array1::zeros(table.dim());
    for w in &words {
        sum += &table.lookup(w);
    }
    sum / words.len() as f64
}

/// One `doc_vector` row per text.
pub fn doc_matrix<S: AsRef<str>>(texts: &[S], table: &EmbeddingTable) -> Array2<f64> {
    let mut out = Array2::zeros((texts.len(), table.dim()));
    for (i, t) in texts.iter().enumerate() {
        out.row_mut(i).assign(&doc_vector(t.as_ref(), table));
    }
    out
}

/// Row indices into a lookup matrix; never empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordIds(pub Vec<u32>);

/// Word ids of a document, truncated to `max_words`. Unknown words map to
/// the OOV row (`table.len()`); an empty document is a single OOV word.
pub fn doc_ids(text: &str, table: &EmbeddingTable, max_words: usize) -> WordIds {
    let oov = table.len() as u32;
    let mut ids: Vec<u32> = doc_words(text)
        .iter()
        .take(max_words)
        .map(|w| table.index_of(w).map_or(oov, |i| i as u32))
        .collect();
    if ids.is_empty() {
        ids.push(oov);
    }
    WordIds(ids)
}

pub(crate) fn embed_ids(lookup: &Array2<f64>, ids: &WordIds) -> Array2<f64> {
    let oov = lookup.nrows() - 1;
    let n = ids.0.len().max(1);
    let mut x = Array2::zeros((n, lookup.ncols()));
    if ids.0.is_empty() {
        x.row_mut(0).assign(&lookup.row(oov));
    }
    for (t, &id) in ids.0.iter().enumerate() {
        x.row_mut(t).assign(&lookup.row((id as usize).min(oov)));
    }
    x
}

pub(crate) fn drop_word_ids(ids: &WordIds, oov: u32, p: f64, rng: &mut Rng) -> WordIds {
    if p <= 0.0 {
        return ids.clone();
    }
    WordIds(
        ids.0
            .iter()
            .map(|&id| if rng.random::<f64>() < p { oov } else { id })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    StaticAverage,
    StaticSequence,
    Crisis2vec,
}

impl Representation {
    pub fn is_sequence(self) -> bool {
        self == Representation::StaticSequence
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::StaticAverage => "static-average",
            Representation::StaticSequence => "static-sequence",
            Representation::Crisis2vec => "crisis2vec",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Lr,
    Svm,
    Nb,
    Rnn,
    Cnn,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Lr,
        BaselineKind::Svm,
        BaselineKind::Nb,
        BaselineKind::Rnn,
        BaselineKind::Cnn,
    ];

    pub fn needs_sequence(self) -> bool {
        matches!(self, BaselineKind::Rnn | BaselineKind::Cnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Lr => "lr",
            BaselineKind::Svm => "svm",
            BaselineKind::Nb => "nb",
            BaselineKind::Rnn => "rnn",
            BaselineKind::Cnn => "cnn",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown baseline '{s}' (expected lr, svm, nb, rnn or cnn)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineParams {
    pub linear: LinearParams,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub cnn_conv_layers: usize,
    pub cnn_filters: usize,
    pub cnn_kernel: usize,
    pub cnn_pool: usize,
    pub cnn_dense: usize,
    /// Words kept per document for sequence models.
    pub max_words: usize,
    /// Training loop settings for the neural baselines.
    pub train: TrainConfig,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            linear: LinearParams::default(),
            lstm_hidden: 30,
            lstm_layers: 2,
            cnn_conv_layers: 2,
            cnn_filters: 250,
            cnn_kernel: 3,
            cnn_pool: 2,
            cnn_dense: 128,
            max_words: 40,
            train: TrainConfig {
                optimizer: crate::train::Optimizer::Adam,
                learning_rate: 1e-3,
                epochs: 5,
                word_dropout: 0.0,
                weight_decay: 0.0,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub representation: Representation,
    #[serde(default)]
    pub params: BaselineParams,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind, representation: Representation) -> Self {
        Self {
            kind,
            representation,
            params: BaselineParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.needs_sequence() != self.representation.is_sequence() {
            return Err(Error::Config(format!(
                "{} cannot use the {} representation",
                self.kind.name(),
                self.representation
            )));
        }
        Ok(())
    }
}

/// Inputs for a baseline: fixed-length rows or word-id sequences.
#[derive(Debug, Clone)]
pub enum Features {
    Fixed(Array2<f64>),
    Sequence {
        lookup: Arc<Array2<f64>>,
        docs: Vec<WordIds>,
    },
}

impl Features {
    pub fn len(&self) -> usize {
        match self {
            Features::Fixed(x) => x.nrows(),
            Features::Sequence { docs, .. } => docs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, spec: &BaselineSpec) -> Result<()> {
        spec.validate()?;
        let fixed = matches!(self, Features::Fixed(_));
        if fixed == spec.kind.needs_sequence() {
            return Err(Error::Config(format!(
                "{} was given {} features",
                spec.kind.name(),
                if fixed { "fixed-length" } else { "sequence" }
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Lr(LogisticRegression),
    Svm(LinearSvm),
    Nb(GaussianNb),
    Rnn(LstmClassifier),
    Cnn(CnnClassifier),
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Lr(_) => BaselineKind::Lr,
            BaselineModel::Svm(_) => BaselineKind::Svm,
            BaselineModel::Nb(_) => BaselineKind::Nb,
            BaselineModel::Rnn(_) => BaselineKind::Rnn,
            BaselineModel::Cnn(_) => BaselineKind::Cnn,
        }
    }

    /// Untrained model of the right shape, e.g. to load a checkpoint into.
    /// `input_dim` is the feature width for fixed-length models; sequence
    /// models take their shape from `lookup`.
    pub fn blank(
        spec: &BaselineSpec,
        input_dim: usize,
        num_classes: usize,
        lookup: Option<Arc<Array2<f64>>>,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let need_lookup = || lookup.clone().ok_or_else(|| Error::Config("sequence model needs a word table".into()));
        let p = &spec.params;
        Ok(match spec.kind {
            BaselineKind::Lr => BaselineModel::Lr(LogisticRegression::zeros(input_dim, num_classes)),
            BaselineKind::Svm => BaselineModel::Svm(LinearSvm::zeros(input_dim, num_classes)),
            BaselineKind::Nb => BaselineModel::Nb(GaussianNb::zeros(input_dim, num_classes)),
            BaselineKind::Rnn => BaselineModel::Rnn(LstmClassifier::init(
                LstmConfig {
                    hidden: p.lstm_hidden,
                    layers: p.lstm_layers,
                    num_classes,
                    seed,
                },
                need_lookup()?,
            )?),
            BaselineKind::Cnn => BaselineModel::Cnn(CnnClassifier::init(
                CnnConfig {
                    conv_layers: p.cnn_conv_layers,
                    filters: p.cnn_filters,
                    kernel: p.cnn_kernel,
                    pool: p.cnn_pool,
                    dense: p.cnn_dense,
                    seq_len: p.max_words,
                    num_classes,
                    seed,
                },
                need_lookup()?,
            )?),
        })
    }
}

impl Parameterized for BaselineModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        match self {
            BaselineModel::Lr(m) => m.visit(f),
            BaselineModel::Svm(m) => m.visit(f),
            BaselineModel::Nb(m) => m.visit(f),
            BaselineModel::Rnn(m) => m.visit(f),
            BaselineModel::Cnn(m) => m.visit(f),
        }
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        match self {
            BaselineModel::Lr(m) => m.visit_mut(f),
            BaselineModel::Svm(m) => m.visit_mut(f),
            BaselineModel::Nb(m) => m.visit_mut(f),
            BaselineModel::Rnn(m) => m.visit_mut(f),
            BaselineModel::Cnn(m) => m.visit_mut(f),
        }
    }
}

fn fit_neural<M: Trainable<Input = WordIds>>(model: M, docs: &[WordIds], y: &[usize], num_classes: usize, config: &TrainConfig) -> Result<M> {
    let data = FitData {
        train: docs,
        train_labels: y,
        val: &[],
        val_labels: &[],
        num_classes,
    };
    Ok(fit(model, &data, config, |_| {})?.model)
}

/// Trains a baseline. Sequence models use `spec.params.train` (its seed
/// seeds both initialization and the training loop).
pub fn fit_baseline(spec: &BaselineSpec, x: &Features, y: &[usize], num_classes: usize) -> Result<BaselineModel> {
    x.check(spec)?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} inputs but {} labels", x.len(), y.len())));
    }
    let p = &spec.params;
    match x {
        Features::Fixed(x) => Ok(match spec.kind {
            BaselineKind::Lr => BaselineModel::Lr(LogisticRegression::fit(x, y, num_classes, &p.linear)?),
            BaselineKind::Svm => BaselineModel::Svm(LinearSvm::fit(x, y, num_classes, &p.linear)?),
            BaselineKind::Nb => BaselineModel::Nb(GaussianNb::fit(x, y, num_classes)?),
            _ => unreachable!("checked above"),
        }),
        Features::Sequence { lookup, docs } => {
            let blank = BaselineModel::blank(spec, lookup.ncols(), num_classes, Some(lookup.clone()), p.train.seed)?;
            Ok(match blank {
                BaselineModel::Rnn(m) => BaselineModel::Rnn(fit_neural(m, docs, y, num_classes, &p.train)?),
                BaselineModel::Cnn(m) => BaselineModel::Cnn(fit_neural(m, docs, y, num_classes, &p.train)?),
                _ => unreachable!("checked above"),
            })
        }
    }
}

/// Labels (ties to the lowest id) and scores: probabilities for LR, NB and
/// the neural models, one-vs-rest margins for the SVM.
pub fn predict(model: &BaselineModel, x: &Features) -> Result<(Vec<usize>, Array2<f64>)> {
    let scores = match (model, x) {
        (BaselineModel::Lr(m), Features::Fixed(x)) => m.scores(x)?,
        (BaselineModel::Svm(m), Features::Fixed(x)) => m.scores(x)?,
        (BaselineModel::Nb(m), Features::Fixed(x)) => m.scores(x)?,
        (BaselineModel::Rnn(m), Features::Sequence { docs, .. }) => m.predict_proba(&docs.iter().collect::<Vec<_>>())?,
        (BaselineModel::Cnn(m), Features::Sequence { docs, .. }) => m.predict_proba(&docs.iter().collect::<Vec<_>>())?,
        (m, _) => {
            return Err(Error::Config(format!(
                "{} model given the wrong kind of features",
                m.kind().name()
            )))
        }
    };
    Ok((argmax_rows(&scores), scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ab() -> EmbeddingTable {
        EmbeddingTable::parse("a 1 1\nb 3 3\n", OovPolicy::Zero).unwrap()
    }

    #[test]
    fn parses_two_lines() {
        let t = EmbeddingTable::parse("a 1 2 3\nb 4 5 6\n", OovPolicy::Zero).unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        assert_eq!(t.lookup("zzz"), array![0.0, 0.0, 0.0]);
    }

    #[test]
    fn header_is_optional_and_checked() {
        let t = EmbeddingTable::parse("2 2\na 1 2\nb 3 4\n", OovPolicy::Zero).unwrap();
        assert_eq!(t.len(), 2);
        let err = EmbeddingTable::parse("2 3\na 1 2\n", OovPolicy::Zero).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn inconsistent_dimension_names_line() {
        let err = EmbeddingTable::parse("a 1 2 3\nb 1 2\n", OovPolicy::Zero).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn duplicate_word_last_wins() {
        let t = EmbeddingTable::parse("a 1 1\nb 2 2\na 5 5\n", OovPolicy::Zero).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("a"), array![5.0, 5.0]);
    }

    #[test]
    fn mean_policy() {
        let t = EmbeddingTable::parse("a 1 1\nb 3 5\n", OovPolicy::Mean).unwrap();
        assert_eq!(t.lookup("?"), array![2.0, 3.0]);
    }

    #[test]
    fn text_round_trip() {
        let t = EmbeddingTable::random(&["x", "y", "z"], 4, 7).unwrap();
        assert_eq!(EmbeddingTable::parse(&t.to_text(), OovPolicy::Zero).unwrap(), t);
    }

    #[test]
    fn doc_vector_examples() {
        let t = ab();
        assert_eq!(doc_vector("a b", &t), array![2.0, 2.0]);
        assert_eq!(doc_vector("a a", &t), array![1.0, 1.0]);
        assert_eq!(doc_vector("", &t), array![0.0, 0.0]);
    }

    #[test]
    fn doc_vector_with_oov_matches_hand_sum() {
        let t = EmbeddingTable::parse("a 1 0\nb 0 2\nc 4 4\n", OovPolicy::Zero).unwrap();
        let v = doc_vector("a b c zzz", &t);
        assert_eq!(v, array![(1.0 + 0.0 + 4.0 + 0.0) / 4.0, (0.0 + 2.0 + 4.0 + 0.0) / 4.0]);
    }

    #[test]
    fn doc_ids_map_unknowns_to_last_row() {
        let t = ab();
        assert_eq!(doc_ids("a q b", &t, 10), WordIds(vec![0, 2, 1]));
        assert_eq!(doc_ids("", &t, 10), WordIds(vec![2]));
        assert_eq!(doc_ids("a b a b", &t, 2), WordIds(vec![0, 1]));
        assert_eq!(t.lookup_matrix().row(2), array![0.0, 0.0]);
    }

    #[test]
    fn mismatched_representation_rejected() {
        let x = Features::Fixed(array![[1.0, 2.0], [3.0, 4.0]]);
        let spec = BaselineSpec::new(BaselineKind::Cnn, Representation::StaticAverage);
        assert!(fit_baseline(&spec, &x, &[0, 1], 2).is_err());
        let spec = BaselineSpec::new(BaselineKind::Lr, Representation::StaticSequence);
        assert!(fit_baseline(&spec, &x, &[0, 1], 2).is_err());
        let spec = BaselineSpec::new(BaselineKind::Cnn, Representation::StaticSequence);
        assert!(fit_baseline(&spec, &x, &[0, 1], 2).is_err());
    }

    #[test]
    fn kind_parses() {
        assert_eq!("SVM".parse::<BaselineKind>().unwrap(), BaselineKind::Svm);
        assert!("tree".parse::<BaselineKind>().is_err());
    }
}
