//! Convolutional classifier over frozen word vectors: stacked
//! convolution + ReLU + max-pool blocks, global max over time, a ReLU dense
//! layer and a linear softmax layer.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{drop_word_ids, embed_ids, WordIds};
use crate::heads::{cross_entropy, softmax_rows};
use crate::params::{Decay, ParamView, ParamViewMut, Parameterized};
use crate::seed::{self, Rng};
use crate::train::Trainable;
use crate::{visit_array, visit_array_mut, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub conv_layers: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub dense: usize,
    /// Documents are truncated or zero-padded to this many words.
    pub seq_len: usize,
    pub num_classes: usize,
    pub seed: u64,
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_layers == 0 || self.filters == 0 || self.kernel == 0 || self.pool == 0 || self.dense == 0 {
            return Err(Error::Config("CNN dimensions must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("CNN needs at least 2 classes".into()));
        }
        let mut len = self.seq_len;
        for l in 0..self.conv_layers {
            if len < self.kernel || (len - self.kernel + 1) / self.pool == 0 {
                return Err(Error::Config(format!(
                    "seq_len {} is too short for {} conv layers (kernel {}, pool {}); layer {l} gets {len} steps",
                    self.seq_len, self.conv_layers, self.kernel, self.pool
                )));
            }
            len = (len - self.kernel + 1) / self.pool;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `kernel·c_in × c_out`; row `j·c_in + c` is tap `j`, channel `c`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnClassifier {
    pub config: CnnConfig,
    pub lookup: Arc<Array2<f64>>,
    pub convs: Vec<ConvLayer>,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

struct ConvTrace {
    patches: Array2<f64>,
    /// Pre-activation conv output.
    pre: Array2<f64>,
    /// Row of `pre` selected by each pooled cell, per channel.
    pool_arg: Array2<usize>,
}

struct DocTrace {
    convs: Vec<ConvTrace>,
    global_arg: Vec<usize>,
    features: Array1<f64>,
    dense_pre: Array1<f64>,
    dense: Array1<f64>,
}

fn im2col(x: &Array2<f64>, k: usize) -> Array2<f64> {
    let (len, c) = x.dim();
    let out_len = len + 1 - k;
    let mut p = Array2::zeros((out_len, k * c));
    for t in 0..out_len {
        for j in 0..k {
            p.slice_mut(ndarray::s![t, j * c..(j + 1) * c]).assign(&x.row(t + j));
        }
    }
    p
}

fn col2im(dp: &Array2<f64>, k: usize, len: usize, c: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((len, c));
    for t in 0..dp.nrows() {
        for j in 0..k {
            let mut row = dx.row_mut(t + j);
            row += &dp.slice(ndarray::s![t, j * c..(j + 1) * c]);
        }
    }
    dx
}

impl CnnClassifier {
    pub fn init(config: CnnConfig, lookup: Arc<Array2<f64>>) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::rng(seed::derive(config.seed, "init.cnn"));
        let mut normal = |r: usize, c: usize, fan_in: usize| {
            // He initialization for ReLU layers
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Array2::from_shape_simple_fn((r, c), || dist.sample(&mut rng))
        };
        let mut convs = Vec::new();
        let mut c_in = lookup.ncols();
        for _ in 0..config.conv_layers {
            let fan = config.kernel * c_in;
            convs.push(ConvLayer {
                w: normal(fan, config.filters, fan),
                b: Array1::zeros(config.filters),
            });
            c_in = config.filters;
        }
        let dense_w = normal(config.filters, config.dense, config.filters);
        let out_w = normal(config.dense, config.num_classes, config.dense) / 2f64.sqrt();
        Ok(Self {
            dense_b: Array1::zeros(config.dense),
            out_b: Array1::zeros(config.num_classes),
            config,
            lookup,
            convs,
            dense_w,
            out_w,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    fn padded_input(&self, ids: &WordIds) -> Array2<f64> {
        let mut x = Array2::zeros((self.config.seq_len, self.lookup.ncols()));
        let embedded = embed_ids(&self.lookup, ids);
        let n = embedded.nrows().min(self.config.seq_len);
        x.slice_mut(ndarray::s![..n, ..]).assign(&embedded.slice(ndarray::s![..n, ..]));
        x
    }

    fn forward_doc(&self, ids: &WordIds) -> (DocTrace, Array1<f64>) {
        let k = self.config.kernel;
        let pool = self.config.pool;
        let mut x = self.padded_input(ids);
        let mut convs = Vec::with_capacity(self.convs.len());
        for layer in &self.convs {
            let patches = im2col(&x, k);
            let pre = patches.dot(&layer.w) + &layer.b;
            let pooled_len = pre.nrows() / pool;
            let c = pre.ncols();
            let mut pooled = Array2::zeros((pooled_len, c));
            let mut pool_arg = Array2::zeros((pooled_len, c));
            for p in 0..pooled_len {
                for ch in 0..c {
                    let mut best = p * pool;
                    for r in p * pool..(p + 1) * pool {
                        if pre[[r, ch]] > pre[[best, ch]] {
                            best = r;
                        }
                    }
                    // max and ReLU commute
                    pooled[[p, ch]] = pre[[best, ch]].max(0.0);
                    pool_arg[[p, ch]] = best;
                }
            }
            convs.push(ConvTrace { patches, pre, pool_arg });
            x = pooled;
        }
        let c = x.ncols();
        let mut features = Array1::zeros(c);
        let mut global_arg = vec![0; c];
        for ch in 0..c {
            let mut best = 0;
            for r in 0..x.nrows() {
                if x[[r, ch]] > x[[best, ch]] {
                    best = r;
                }
            }
            features[ch] = x[[best, ch]];
            global_arg[ch] = best;
        }
        let dense_pre = features.dot(&self.dense_w) + &self.dense_b;
        let dense = dense_pre.mapv(|v| v.max(0.0));
        let logits = dense.dot(&self.out_w) + &self.out_b;
        (
            DocTrace {
                convs,
                global_arg,
                features,
                dense_pre,
                dense,
            },
            logits,
        )
    }

    fn backward_doc(&self, tr: &DocTrace, d_logits: ndarray::ArrayView1<f64>, grad: &mut Self) {
        let outer = |a: &Array1<f64>, b: &ndarray::ArrayView1<f64>| {
            a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
        };
        grad.out_w += &outer(&tr.dense, &d_logits);
        grad.out_b += &d_logits;
        let mut d_dense = self.out_w.dot(&d_logits);
        d_dense.zip_mut_with(&tr.dense_pre, |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        grad.dense_w += &outer(&tr.features, &d_dense.view());
        grad.dense_b += &d_dense;
        let d_features = self.dense_w.dot(&d_dense);

        let k = self.config.kernel;
        let last = tr.convs.last().expect("at least one conv layer");
        let mut d_x = Array2::<f64>::zeros((last.pre.nrows() / self.config.pool, last.pre.ncols()));
        for (ch, &r) in tr.global_arg.iter().enumerate() {
            d_x[[r, ch]] = d_features[ch];
        }
        for (l, ct) in tr.convs.iter().enumerate().rev() {
            let mut d_pre = Array2::<f64>::zeros(ct.pre.dim());
            for ((p, ch), &r) in ct.pool_arg.indexed_iter() {
                if ct.pre[[r, ch]] > 0.0 {
                    d_pre[[r, ch]] += d_x[[p, ch]];
                }
            }
            let g = &mut grad.convs[l];
            ndarray::linalg::general_mat_mul(1.0, &ct.patches.t(), &d_pre, 1.0, &mut g.w);
            g.b += &d_pre.sum_axis(Axis(0));
            if l > 0 {
                let d_patches = d_pre.dot(&self.convs[l].w.t());
                let c_in = self.convs[l].w.nrows() / k;
                d_x = col2im(&d_patches, k, ct.pre.nrows() + k - 1, c_in);
            }
        }
    }

    pub fn logits(&self, inputs: &[&WordIds]) -> Array2<f64> {
        let mut out = Array2::zeros((inputs.len(), self.config.num_classes));
        for (i, ids) in inputs.iter().enumerate() {
            out.row_mut(i).assign(&self.forward_doc(ids).1);
        }
        out
    }
}

impl Parameterized for CnnClassifier {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        for (i, c) in self.convs.iter().enumerate() {
            visit_array!(f, format!("conv.{i}.weight"), c.w, Decay::Yes);
            visit_array!(f, format!("conv.{i}.bias"), c.b, Decay::No);
        }
        visit_array!(f, "dense.weight", self.dense_w, Decay::Yes);
        visit_array!(f, "dense.bias", self.dense_b, Decay::No);
        visit_array!(f, "output.weight", self.out_w, Decay::Yes);
        visit_array!(f, "output.bias", self.out_b, Decay::No);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            visit_array_mut!(f, format!("conv.{i}.weight"), c.w, Decay::Yes);
            visit_array_mut!(f, format!("conv.{i}.bias"), c.b, Decay::No);
        }
        visit_array_mut!(f, "dense.weight", self.dense_w, Decay::Yes);
        visit_array_mut!(f, "dense.bias", self.dense_b, Decay::No);
        visit_array_mut!(f, "output.weight", self.out_w, Decay::Yes);
        visit_array_mut!(f, "output.bias", self.out_b, Decay::No);
    }
}

impl Trainable for CnnClassifier {
    type Input = WordIds;

    fn loss_and_grad(
        &self,
        inputs: &[&WordIds],
        labels: &[usize],
        class_weights: Option<&[f64]>,
        _rng: &mut Rng,
    ) -> Result<(f64, Self)> {
        let runs: Vec<_> = inputs.iter().map(|ids| self.forward_doc(ids)).collect();
        let mut logits = Array2::zeros((inputs.len(), self.config.num_classes));
        for (i, (_, l)) in runs.iter().enumerate() {
            logits.row_mut(i).assign(l);
        }
        let (loss, d_logits) = cross_entropy(&logits, labels, class_weights)?;
        let mut grad = self.zeros_like();
        for (i, (trace, _)) in runs.iter().enumerate() {
            self.backward_doc(trace, d_logits.row(i), &mut grad);
        }
        Ok((loss, grad))
    }

    fn predict_proba(&self, inputs: &[&WordIds]) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.logits(inputs)))
    }

    fn drop_words(&self, input: &WordIds, p: f64, rng: &mut Rng) -> WordIds {
        drop_word_ids(input, self.lookup.nrows() as u32 - 1, p, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn short_sequences_rejected() {
        let cfg = CnnConfig {
            conv_layers: 2,
            filters: 4,
            kernel: 3,
            pool: 2,
            dense: 3,
            seq_len: 6,
            num_classes: 2,
            seed: 0,
        };
        assert!(cfg.validate().is_err());
        assert!(CnnConfig { seq_len: 10, ..cfg }.validate().is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(5);
        let lookup = Arc::new(Array2::from_shape_simple_fn((7, 3), || rng.random_range(-1.0..1.0)));
        let cfg = CnnConfig {
            conv_layers: 2,
            filters: 4,
            kernel: 3,
            pool: 2,
            dense: 5,
            seq_len: 12,
            num_classes: 3,
            seed: 2,
        };
        let mut model = CnnClassifier::init(cfg, lookup).unwrap();
        let docs = [WordIds(vec![0, 1, 2, 3, 4, 5, 6, 1, 2]), WordIds(vec![3, 3, 6, 0, 2, 5, 1, 4, 0, 2, 6, 5, 3])];
        let refs: Vec<&WordIds> = docs.iter().collect();
        let labels = [1, 2];
        let (_, grads) = model.loss_and_grad(&refs, &labels, None, &mut rng).unwrap();
        let g = grads.flatten();
        let base = model.flatten();
        let eps = 1e-6;
        let mut bad = 0;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += eps;
            model.assign_flat(&p).unwrap();
            let lp = model.loss_and_grad(&refs, &labels, None, &mut rng).unwrap().0;
            p[i] -= 2.0 * eps;
            model.assign_flat(&p).unwrap();
            let lm = model.loss_and_grad(&refs, &labels, None, &mut rng).unwrap().0;
            let fd = (lp - lm) / (2.0 * eps);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
            // max/ReLU kinks can sit inside the finite-difference interval
            if err > 1e-5 {
                bad += 1;
            }
        }
        assert!(bad * 100 <= base.len(), "{bad} of {} coordinates disagree", base.len());
    }
}
