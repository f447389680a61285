//! Training loop shared by the encoder classifier and the neural baselines.

mod optim;
mod search;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use optim::{clip_global_norm, OptimizerState, Optimizer, BETA1, BETA2, EPSILON};
pub use search::{hyperparam_search, Leaderboard, LeaderboardEntry, SearchPoint, SearchSpace, TrialResult};

use crate::corpus::Task;
use crate::heads::SequenceClassifier;
use crate::metrics::{self, MetricsReport};
use crate::params::Parameterized;
use crate::seed::{self, Rng};
use crate::tokenizer::{TokenSequence, CLS_ID, PAD_ID, UNK_ID};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub word_dropout: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub task: Task,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Inverse-frequency class weights in the loss.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::AdamW,
            learning_rate: 5e-5,
            batch_size: 32,
            epochs: 3,
            word_dropout: 0.25,
            weight_decay: 0.01,
            seed: 0,
            task: Task::Recognition,
            grad_clip: Some(1.0),
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::Config(format!(
                "word_dropout {} must lie in [0, 1)",
                self.word_dropout
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be a nonnegative number",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config("grad_clip must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Replaces each unmasked, non-special token by `[UNK]` with probability `p`.
/// `[CLS]`, `[PAD]` and the mask are never touched.
pub fn word_dropout(seq: &TokenSequence, p: f64, rng: &mut Rng) -> TokenSequence {
    let mut out = seq.clone();
    if p <= 0.0 {
        return out;
    }
    for (id, &m) in out.ids.iter_mut().zip(&seq.mask) {
        if m == 1 && *id != CLS_ID && *id != PAD_ID && rng.random::<f64>() < p {
            *id = UNK_ID;
        }
    }
    out
}

/// A classifier the generic loop can train.
///
/// Gradients are values of the model type itself.
pub trait Trainable: Parameterized + Clone {
    type Input: Clone;

    fn loss_and_grad(
        &self,
        inputs: &[&Self::Input],
        labels: &[usize],
        class_weights: Option<&[f64]>,
        rng: &mut Rng,
    ) -> Result<(f64, Self)>;

    /// Eval-mode class probabilities, one row per input.
    fn predict_proba(&self, inputs: &[&Self::Input]) -> Result<Array2<f64>>;

    /// Input with word dropout applied.
    fn drop_words(&self, input: &Self::Input, p: f64, rng: &mut Rng) -> Self::Input;
}

impl Trainable for SequenceClassifier {
    type Input = TokenSequence;

    fn loss_and_grad(
        &self,
        inputs: &[&TokenSequence],
        labels: &[usize],
        class_weights: Option<&[f64]>,
        rng: &mut Rng,
    ) -> Result<(f64, Self)> {
        SequenceClassifier::loss_and_grad(self, inputs, labels, class_weights, Some(rng))
    }

    fn predict_proba(&self, inputs: &[&TokenSequence]) -> Result<Array2<f64>> {
        SequenceClassifier::predict_proba(self, inputs)
    }

    fn drop_words(&self, input: &TokenSequence, p: f64, rng: &mut Rng) -> TokenSequence {
        word_dropout(input, p, rng)
    }
}

/// Argmax per row; ties go to the lowest class id.
pub fn argmax_rows(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Probabilities and predicted labels in chunks of `batch_size`.
pub fn predict<M: Trainable>(model: &M, inputs: &[M::Input], batch_size: usize) -> Result<(Vec<usize>, Array2<f64>)> {
    let mut rows: Vec<Array2<f64>> = Vec::new();
    for chunk in inputs.chunks(batch_size.max(1)) {
        let refs: Vec<&M::Input> = chunk.iter().collect();
        rows.push(model.predict_proba(&refs)?);
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let probs = if views.is_empty() {
        Array2::zeros((0, 0))
    } else {
        ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?
    };
    Ok((argmax_rows(&probs), probs))
}

/// Evaluates `model` on labeled inputs.
pub fn evaluate<M: Trainable>(
    model: &M,
    inputs: &[M::Input],
    labels: &[usize],
    num_classes: usize,
    batch_size: usize,
) -> Result<MetricsReport> {
    let (pred, _) = predict(model, inputs, batch_size)?;
    MetricsReport::evaluate(&pred, labels, num_classes)
}

/// Inverse-frequency weights `n / (C · count_c)`; absent classes get 1.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 1.0 } else { n / (num_classes as f64 * c as f64) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: f64,
}

/// One JSON object per line.
pub fn history_to_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("plain record") + "\n")
        .collect()
}

pub fn history_from_jsonl(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::data(format!("history line {}", i + 1), e.to_string())))
        .collect()
}

/// Training and validation data for [`fit`].
pub struct FitData<'a, I> {
    pub train: &'a [I],
    pub train_labels: &'a [usize],
    pub val: &'a [I],
    pub val_labels: &'a [usize],
    pub num_classes: usize,
}

pub struct FitOutcome<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
}

/// Trains `model` with mini-batch cross-entropy.
///
/// `history[0]` is the untrained model (eval-mode training loss and
/// validation metrics); each later record is one epoch, with the mean of its
/// batch losses. `on_epoch` is called after every record.
pub fn fit<M: Trainable>(
    mut model: M,
    data: &FitData<'_, M::Input>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome<M>> {
    config.validate()?;
    if data.train.len() != data.train_labels.len() || data.val.len() != data.val_labels.len() {
        return Err(Error::Shape("inputs and labels differ in length".into()));
    }
    if data.train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let weights = config
        .class_weighting
        .then(|| class_weights(data.train_labels, data.num_classes));
    let eval_batch = config.batch_size.max(64);

    let val_metrics = |m: &M| -> Result<(Option<f64>, f64)> {
        if data.val.is_empty() {
            return Ok((None, 0.0));
        }
        let r = evaluate(m, data.val, data.val_labels, data.num_classes, eval_batch)?;
        Ok((r.accuracy, r.macro_f1))
    };

    let initial_loss = {
        let (_, probs) = predict(&model, data.train, eval_batch)?;
        let mut total = 0.0;
        for (row, &y) in probs.outer_iter().zip(data.train_labels) {
            total -= row[y].max(f64::MIN_POSITIVE).ln();
        }
        total / data.train.len() as f64
    };
    let (acc, f1) = val_metrics(&model)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_loss: initial_loss,
        val_accuracy: acc,
        val_macro_f1: f1,
    }];
    on_epoch(&history[0]);

    let mut optimizer = OptimizerState::new(config.optimizer, config.learning_rate, config.weight_decay);
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, seed::ns::SHUFFLE));
    let mut word_rng = seed::rng(seed::derive(config.seed, "dropout.words"));
    let mut dropout_rng = seed::rng(seed::derive(config.seed, seed::ns::DROPOUT));
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<M::Input> = idx
                .iter()
                .map(|&i| model.drop_words(&data.train[i], config.word_dropout, &mut word_rng))
                .collect();
            let refs: Vec<&M::Input> = inputs.iter().collect();
            let labels: Vec<usize> = idx.iter().map(|&i| data.train_labels[i]).collect();
            let (loss, mut grads) = model.loss_and_grad(&refs, &labels, weights.as_deref(), &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is {loss} at epoch {epoch}, batch {b} (first example index {})",
                    idx[0]
                )));
            }
            if let Some(c) = config.grad_clip {
                let norm = clip_global_norm(&mut grads, c);
                if !norm.is_finite() {
                    return Err(Error::Numeric(format!(
                        "gradient norm is {norm} at epoch {epoch}, batch {b}"
                    )));
                }
            }
            optimizer.step(&mut model, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let (acc, f1) = val_metrics(&model)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_accuracy: acc,
            val_macro_f1: f1,
        };
        log::info!(
            "epoch {epoch}: loss {:.5}, val accuracy {}, val macro-F1 {:.4}",
            record.train_loss,
            acc.map_or("n/a".to_string(), |a| format!("{a:.4}")),
            f1
        );
        on_epoch(&record);
        history.push(record);
    }
    Ok(FitOutcome { model, history })
}

/// Labels of the given task for a list of token sequences, ready for [`fit`].
pub fn task_labels(corpus: &crate::corpus::LabeledCorpus, task: Task) -> Vec<usize> {
    corpus.labels(task)
}

/// Convenience for confusion-based accuracy on label lists.
pub fn accuracy_of(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Option<f64>> {
    Ok(metrics::accuracy(&metrics::confusion(pred, truth, num_classes)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn seq(ids: &[u32], max_len: usize) -> TokenSequence {
        let mut full = ids.to_vec();
        let mut mask = vec![1u8; ids.len()];
        full.resize(max_len, PAD_ID);
        mask.resize(max_len, 0);
        TokenSequence {
            ids: full,
            mask,
            original_length: ids.len(),
        }
    }

    #[test]
    fn word_dropout_boundaries() {
        let s = seq(&[CLS_ID, 7, 8, 9, 10], 8);
        let mut rng = seed::rng(1);
        assert_eq!(word_dropout(&s, 0.0, &mut rng), s);
        let all = word_dropout(&s, 1.0 - 1e-12, &mut rng);
        assert_eq!(all.ids[..5], [CLS_ID, UNK_ID, UNK_ID, UNK_ID, UNK_ID]);
        assert_eq!(all.ids[5..], [PAD_ID; 3]);
        assert_eq!(all.mask, s.mask);
    }

    #[test]
    fn word_dropout_rate_concentrates() {
        let ids: Vec<u32> = std::iter::once(CLS_ID).chain((0..100).map(|i| 10 + i)).collect();
        let s = seq(&ids, 101);
        let mut rng = seed::rng(2);
        let mut replaced = 0;
        for _ in 0..100 {
            let d = word_dropout(&s, 0.25, &mut rng);
            replaced += d.ids.iter().filter(|&&i| i == UNK_ID).count();
        }
        let frac = replaced as f64 / 10_000.0;
        assert!((frac - 0.25).abs() < 0.02, "{frac}");
    }

    #[test]
    fn argmax_ties_go_low() {
        let s = ndarray::array![[0.25, 0.25, 0.25, 0.25], [0.1, 0.45, 0.45, 0.0]];
        assert_eq!(argmax_rows(&s), vec![0, 1]);
    }

    #[test]
    fn history_round_trip() {
        let h = vec![
            EpochRecord {
                epoch: 0,
                train_loss: 1.5,
                val_accuracy: None,
                val_macro_f1: 0.0,
            },
            EpochRecord {
                epoch: 1,
                train_loss: 0.1 + 0.2,
                val_accuracy: Some(2.0 / 3.0),
                val_macro_f1: 0.5,
            },
        ];
        assert_eq!(history_from_jsonl(&history_to_jsonl(&h)).unwrap(), h);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            TrainConfig {
                word_dropout: 1.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    fn tiny_classifier(seed: u64) -> SequenceClassifier {
        let cfg = EncoderConfig {
            num_layers: 1,
            hidden_dim: 16,
            num_heads: 2,
            ffn_dim: 32,
            max_positions: 8,
            vocab_size: 20,
            dropout_rate: 0.0,
            seed,
        };
        SequenceClassifier::init(&cfg, 2).unwrap()
    }

    #[test]
    fn overfits_one_batch() {
        let mut rng = seed::rng(3);
        let inputs: Vec<TokenSequence> = (0..8)
            .map(|_| {
                let ids: Vec<u32> = std::iter::once(CLS_ID).chain((0..5).map(|_| rng.random_range(5..20))).collect();
                seq(&ids, 8)
            })
            .collect();
        let labels = vec![0, 1, 0, 1, 1, 0, 1, 0];
        let data = FitData {
            train: &inputs,
            train_labels: &labels,
            val: &inputs,
            val_labels: &labels,
            num_classes: 2,
        };
        let config = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 8,
            epochs: 200,
            word_dropout: 0.0,
            ..Default::default()
        };
        let out = fit(tiny_classifier(4), &data, &config, |_| {}).unwrap();
        assert_eq!(out.history.len(), 201);
        assert_eq!(out.history.last().unwrap().val_accuracy, Some(1.0));
    }

    #[test]
    fn sgd_zero_lr_leaves_parameters() {
        let inputs = vec![seq(&[CLS_ID, 5, 6], 4), seq(&[CLS_ID, 7], 4)];
        let labels = vec![0, 1];
        let data = FitData {
            train: &inputs,
            train_labels: &labels,
            val: &[],
            val_labels: &[],
            num_classes: 2,
        };
        let config = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.0,
            epochs: 1,
            ..Default::default()
        };
        let model = tiny_classifier(5);
        let out = fit(model.clone(), &data, &config, |_| {}).unwrap();
        assert_eq!(out.model, model);
    }

    #[test]
    fn adam_and_adamw_agree_without_decay() {
        let inputs: Vec<TokenSequence> = (0..6).map(|i| seq(&[CLS_ID, 5 + i, 6 + i], 4)).collect();
        let labels = vec![0, 1, 0, 1, 0, 1];
        let data = FitData {
            train: &inputs,
            train_labels: &labels,
            val: &inputs,
            val_labels: &labels,
            num_classes: 2,
        };
        let run = |opt| {
            let config = TrainConfig {
                optimizer: opt,
                weight_decay: 0.0,
                learning_rate: 1e-3,
                batch_size: 2,
                epochs: 2,
                ..Default::default()
            };
            fit(tiny_classifier(6), &data, &config, |_| {}).unwrap().model.flatten()
        };
        let a = run(Optimizer::Adam);
        let b = run(Optimizer::AdamW);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
