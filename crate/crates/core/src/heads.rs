//! Output layers on top of the encoder: the `[CLS]` linear classifier and
//! mean-pooled tweet embeddings.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use crate::encoder::ops::softmax;
use crate::encoder::{cls_rows, Batch, EncoderConfig, EncoderModel};
use crate::params::{Decay, ParamView, ParamViewMut, Parameterized};
use crate::seed::{self, Rng};
use crate::tokenizer::TokenSequence;
use crate::{visit_array, visit_array_mut, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// `d × C`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ClassifierHead {
    pub fn zeros(hidden_dim: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "a classifier needs at least 2 classes, got {num_classes}"
            )));
        }
        if hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        Ok(Self {
            weight: Array2::zeros((hidden_dim, num_classes)),
            bias: Array1::zeros(num_classes),
        })
    }

    /// Weights `N(0, 1/d)`, zero bias.
    pub fn init(hidden_dim: usize, num_classes: usize, rng: &mut Rng) -> Result<Self> {
        let mut head = Self::zeros(hidden_dim, num_classes)?;
        let dist = Normal::new(0.0, 1.0 / (hidden_dim as f64).sqrt()).expect("positive std");
        head.weight.mapv_inplace(|_| dist.sample(rng));
        Ok(head)
    }

    pub fn hidden_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.weight.ncols()
    }

    /// `features · W + b` for a `n × d` feature matrix.
    pub fn logits(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.hidden_dim() {
            return Err(Error::Shape(format!(
                "features of width {} for a head expecting {}",
                features.ncols(),
                self.hidden_dim()
            )));
        }
        Ok(features.dot(&self.weight) + &self.bias)
    }

    /// Class probabilities from the `[CLS]` row of each sequence.
    pub fn classify(&self, hidden: &Array2<f64>, batch: &Batch) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.logits(&cls_rows(hidden, batch))?))
    }
}

impl Parameterized for ClassifierHead {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        visit_array!(f, "head.weight", self.weight, Decay::Yes);
        visit_array!(f, "head.bias", self.bias, Decay::No);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        visit_array_mut!(f, "head.weight", self.weight, Decay::Yes);
        visit_array_mut!(f, "head.bias", self.bias, Decay::No);
    }
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for (mut row, src) in out.outer_iter_mut().zip(logits.outer_iter()) {
        row.assign(&softmax(src));
    }
    out
}

/// Mean cross-entropy of `logits` against `labels` and its gradient with
/// respect to the logits. With class weights the mean is weighted.
pub fn cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
) -> Result<(f64, Array2<f64>)> {
    let (n, c) = logits.dim();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::data("labels", format!("label {bad} outside 0..{c}")));
    }
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    let mut total_weight = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let w = class_weights.map_or(1.0, |cw| cw[y]);
        let p = grad[[i, y]];
        loss -= w * p.max(f64::MIN_POSITIVE).ln();
        grad[[i, y]] -= 1.0;
        grad.row_mut(i).mapv_inplace(|g| g * w);
        total_weight += w;
    }
    if total_weight <= 0.0 {
        return Err(Error::Numeric("zero total class weight in batch".into()));
    }
    grad /= total_weight;
    Ok((loss / total_weight, grad))
}

/// Encoder plus `[CLS]` head: the fine-tuned sequence classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceClassifier {
    pub encoder: EncoderModel,
    pub head: ClassifierHead,
}

impl SequenceClassifier {
    pub fn init(config: &EncoderConfig, num_classes: usize) -> Result<Self> {
        let encoder = EncoderModel::init(config)?;
        let mut rng = seed::rng(seed::derive(config.seed, "init.head"));
        let head = ClassifierHead::init(config.hidden_dim, num_classes, &mut rng)?;
        Ok(Self { encoder, head })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            head: ClassifierHead::zeros(self.head.hidden_dim(), self.head.num_classes())
                .expect("shape of an existing head"),
        }
    }

    pub fn predict_proba(&self, seqs: &[&TokenSequence]) -> Result<Array2<f64>> {
        let batch = Batch::from_sequences(seqs.iter().copied());
        let hidden = self.encoder.forward(&batch)?;
        self.head.classify(&hidden, &batch)
    }

    /// Mean cross-entropy over the batch and the gradient of every parameter.
    /// Dropout is drawn from `rng` when given.
    pub fn loss_and_grad(
        &self,
        seqs: &[&TokenSequence],
        labels: &[usize],
        class_weights: Option<&[f64]>,
        rng: Option<&mut Rng>,
    ) -> Result<(f64, Self)> {
        let batch = Batch::from_sequences(seqs.iter().copied());
        let (hidden, cache) = self.encoder.forward_train(&batch, rng)?;
        let cls = cls_rows(&hidden, &batch);
        let logits = self.head.logits(&cls)?;
        let (loss, d_logits) = cross_entropy(&logits, labels, class_weights)?;

        let mut head_grad = ClassifierHead::zeros(self.head.hidden_dim(), self.head.num_classes())?;
        head_grad.weight = cls.t().dot(&d_logits);
        head_grad.bias = d_logits.sum_axis(Axis(0));
        let d_cls = d_logits.dot(&self.head.weight.t());
        let mut d_hidden = Array2::<f64>::zeros(hidden.dim());
        for b in 0..batch.size {
            d_hidden.row_mut(b * batch.len).assign(&d_cls.row(b));
        }
        let encoder_grad = self.encoder.backward(&cache, &d_hidden)?;
        Ok((
            loss,
            Self {
                encoder: encoder_grad,
                head: head_grad,
            },
        ))
    }
}

impl Parameterized for SequenceClassifier {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        self.encoder.visit(f);
        self.head.visit(f);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        self.encoder.visit_mut(f);
        self.head.visit_mut(f);
    }
}

/// Mean of the rows that are unmasked and not position 0.
///
/// Each coordinate is averaged over its values in sorted order with a running
/// mean, so the result does not depend on the order of the pooled rows and is
/// exact when they are all equal.
pub fn crisis2vec(hidden: ArrayView2<f64>, mask: &[u8]) -> Result<Array1<f64>> {
    if mask.len() != hidden.nrows() {
        return Err(Error::Shape(format!(
            "mask of length {} for {} positions",
            mask.len(),
            hidden.nrows()
        )));
    }
    let pooled: Vec<usize> = (1..hidden.nrows()).filter(|&t| mask[t] != 0).collect();
    if pooled.is_empty() {
        return Err(Error::data(
            "crisis2vec",
            "no unmasked position besides [CLS] to pool",
        ));
    }
    let mut out = Array1::zeros(hidden.ncols());
    let mut column = Vec::with_capacity(pooled.len());
    for (j, o) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(pooled.iter().map(|&t| hidden[[t, j]]));
        column.sort_by(f64::total_cmp);
        let mut mean = 0.0;
        for (k, v) in column.iter().enumerate() {
            mean += (v - mean) / (k + 1) as f64;
        }
        *o = mean;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TweetEmbedding {
    pub id: String,
    pub vector: Array1<f64>,
}

/// Crisis2vec embeddings for every sequence, encoded in batches of
/// `batch_size` (eval mode).
pub fn embed_sequences(
    encoder: &EncoderModel,
    seqs: &[TokenSequence],
    batch_size: usize,
) -> Result<Vec<Array1<f64>>> {
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(batch_size.max(1)) {
        let batch = Batch::from_sequences(chunk);
        let hidden = encoder.forward(&batch)?;
        for b in 0..batch.size {
            let rows = hidden.slice(ndarray::s![b * batch.len..(b + 1) * batch.len, ..]);
            out.push(crisis2vec(rows, batch.sequence_mask(b))?);
        }
    }
    Ok(out)
}

const EMBEDDING_HEADER: &str = "# crisis2vec";

/// Writes one `id<TAB>v1 v2 ...` line per embedding after a header carrying
/// the dimension and checkpoint hash.
pub fn write_embeddings(path: &Path, checkpoint_hash: &str, embeddings: &[TweetEmbedding]) -> Result<()> {
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{EMBEDDING_HEADER} dim={dim} checkpoint={checkpoint_hash}").map_err(io)?;
    for e in embeddings {
        if e.vector.len() != dim {
            return Err(Error::Shape(format!(
                "embedding for {} has length {}, expected {dim}",
                e.id,
                e.vector.len()
            )));
        }
        if e.id.contains(['\t', '\n']) {
            return Err(Error::data(&e.id, "tweet id contains a tab or newline"));
        }
        let values: Vec<String> = e.vector.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}\t{}", e.id, values.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a file written by [`write_embeddings`]. Returns the checkpoint hash
/// and the embeddings.
pub fn read_embeddings(path: &Path) -> Result<(String, Vec<TweetEmbedding>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let ctx = |n: usize| format!("{}: line {n}", path.display());
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| Error::data(ctx(1), "missing header"))?;
    let rest = header
        .strip_prefix(EMBEDDING_HEADER)
        .ok_or_else(|| Error::data(ctx(1), "not an embedding file"))?;
    let mut dim = None;
    let mut hash = String::new();
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("dim=") {
            dim = v.parse::<usize>().ok();
        } else if let Some(v) = field.strip_prefix("checkpoint=") {
            hash = v.to_string();
        }
    }
    let dim = dim.ok_or_else(|| Error::data(ctx(1), "header lacks dim="))?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::data(ctx(n), "expected id<TAB>values"))?;
        let vector: Vec<f64> = rest
            .split(' ')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::data(ctx(n), e.to_string()))?;
        if vector.len() != dim {
            return Err(Error::data(ctx(n), format!("{} values, expected {dim}", vector.len())));
        }
        out.push(TweetEmbedding {
            id: id.to_string(),
            vector: Array1::from(vector),
        });
    }
    Ok((hash, out))
}
