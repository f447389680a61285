//! Stacked LSTM over frozen word vectors; the last hidden state of the top
//! layer feeds a linear softmax layer.

use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{drop_word_ids, embed_ids, WordIds};
use crate::heads::{cross_entropy, softmax_rows};
use crate::params::{Decay, ParamView, ParamViewMut, Parameterized};
use crate::seed::{self, Rng};
use crate::train::Trainable;
use crate::{visit_array, visit_array_mut, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden: usize,
    pub layers: usize,
    pub num_classes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `in × 4h`, gate blocks in the order input, forget, cell, output.
    pub w_x: Array2<f64>,
    /// `h × 4h`
    pub w_h: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifier {
    pub config: LstmConfig,
    /// Frozen word vectors; the last row is the out-of-vocabulary vector.
    pub lookup: Arc<Array2<f64>>,
    pub layers: Vec<LstmLayer>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

struct LayerTrace {
    input: Array2<f64>,
    /// Post-activation gates, `T × 4h`.
    gates: Array2<f64>,
    /// Cell states `c_0..c_T` (`T+1 × h`, row 0 is zero).
    cells: Array2<f64>,
    /// Hidden states `h_0..h_T`.
    hidden: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmClassifier {
    pub fn init(config: LstmConfig, lookup: Arc<Array2<f64>>) -> Result<Self> {
        if config.hidden == 0 || config.layers == 0 || config.num_classes < 2 {
            return Err(Error::Config(
                "LSTM needs hidden ≥ 1, layers ≥ 1 and at least 2 classes".into(),
            ));
        }
        let h = config.hidden;
        let mut rng = seed::rng(seed::derive(config.seed, "init.lstm"));
        let bound = 1.0 / (h as f64).sqrt();
        let mut uniform = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.random_range(-bound..bound));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input = if l == 0 { lookup.ncols() } else { h };
            let mut b = Array1::zeros(4 * h);
            b.slice_mut(s![h..2 * h]).fill(1.0);
            layers.push(LstmLayer {
                w_x: uniform(input, 4 * h),
                w_h: uniform(h, 4 * h),
                b,
            });
        }
        let dist = Normal::new(0.0, 1.0 / (h as f64).sqrt()).expect("positive std");
        let out_w = Array2::from_shape_simple_fn((h, config.num_classes), || dist.sample(&mut rng));
        Ok(Self {
            out_b: Array1::zeros(config.num_classes),
            config,
            lookup,
            layers,
            out_w,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    fn run_layer(layer: &LstmLayer, input: Array2<f64>) -> LayerTrace {
        let t_len = input.nrows();
        let h = layer.w_h.nrows();
        let pre = input.dot(&layer.w_x) + &layer.b;
        let mut gates = Array2::<f64>::zeros((t_len, 4 * h));
        let mut cells = Array2::<f64>::zeros((t_len + 1, h));
        let mut hidden = Array2::<f64>::zeros((t_len + 1, h));
        for t in 0..t_len {
            let z = &pre.row(t) + &hidden.row(t).dot(&layer.w_h);
            let mut g = gates.row_mut(t);
            for j in 0..h {
                g[j] = sigmoid(z[j]);
                g[h + j] = sigmoid(z[h + j]);
                g[2 * h + j] = z[2 * h + j].tanh();
                g[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            for j in 0..h {
                let c = g[h + j] * cells[[t, j]] + g[j] * g[2 * h + j];
                cells[[t + 1, j]] = c;
                hidden[[t + 1, j]] = g[3 * h + j] * c.tanh();
            }
        }
        LayerTrace {
            input,
            gates,
            cells,
            hidden,
        }
    }

    fn forward_doc(&self, ids: &WordIds) -> (Vec<LayerTrace>, Array1<f64>) {
        let mut x = embed_ids(&self.lookup, ids);
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let trace = Self::run_layer(layer, x);
            x = trace.hidden.slice(s![1.., ..]).to_owned();
            traces.push(trace);
        }
        let last = traces.last().expect("at least one layer");
        let h_final = last.hidden.row(last.hidden.nrows() - 1).to_owned();
        let logits = h_final.dot(&self.out_w) + &self.out_b;
        (traces, logits)
    }

    fn backward_doc(&self, traces: &[LayerTrace], d_logits: ndarray::ArrayView1<f64>, grad: &mut Self) {
        let top = traces.last().expect("at least one layer");
        let t_len = top.input.nrows();
        let h = self.config.hidden;
        let h_final = top.hidden.row(t_len);
        grad.out_w += &h_final
            .to_owned()
            .insert_axis(Axis(1))
            .dot(&d_logits.insert_axis(Axis(0)));
        grad.out_b += &d_logits;
        let mut d_hidden_seq = Array2::<f64>::zeros((t_len, h));
        d_hidden_seq.row_mut(t_len - 1).assign(&self.out_w.dot(&d_logits));

        for (l, trace) in traces.iter().enumerate().rev() {
            let layer = &self.layers[l];
            let gl = &mut grad.layers[l];
            let mut d_pre = Array2::<f64>::zeros((t_len, 4 * h));
            let mut dh_next = Array1::<f64>::zeros(h);
            let mut dc_next = Array1::<f64>::zeros(h);
            for t in (0..t_len).rev() {
                let g = trace.gates.row(t);
                let mut dz = d_pre.row_mut(t);
                for j in 0..h {
                    let dh = d_hidden_seq[[t, j]] + dh_next[j];
                    let c = trace.cells[[t + 1, j]];
                    let tc = c.tanh();
                    let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                    dz[j] = dc * gg * i * (1.0 - i);
                    dz[h + j] = dc * trace.cells[[t, j]] * f * (1.0 - f);
                    dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                    dz[3 * h + j] = dh * tc * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                let h_prev = trace.hidden.row(t);
                ndarray::linalg::general_mat_mul(
                    1.0,
                    &h_prev.insert_axis(Axis(1)),
                    &dz.view().insert_axis(Axis(0)),
                    1.0,
                    &mut gl.w_h,
                );
                dh_next = layer.w_h.dot(&dz);
            }
            ndarray::linalg::general_mat_mul(1.0, &trace.input.t(), &d_pre, 1.0, &mut gl.w_x);
            gl.b += &d_pre.sum_axis(Axis(0));
            if l > 0 {
                d_hidden_seq = d_pre.dot(&layer.w_x.t());
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

impl Parameterized for LstmClassifier {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        for (i, l) in self.layers.iter().enumerate() {
            visit_array!(f, format!("lstm.{i}.w_x"), l.w_x, Decay::Yes);
            visit_array!(f, format!("lstm.{i}.w_h"), l.w_h, Decay::Yes);
            visit_array!(f, format!("lstm.{i}.b"), l.b, Decay::No);
        }
        visit_array!(f, "output.weight", self.out_w, Decay::Yes);
        visit_array!(f, "output.bias", self.out_b, Decay::No);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            visit_array_mut!(f, format!("lstm.{i}.w_x"), l.w_x, Decay::Yes);
            visit_array_mut!(f, format!("lstm.{i}.w_h"), l.w_h, Decay::Yes);
            visit_array_mut!(f, format!("lstm.{i}.b"), l.b, Decay::No);
        }
        visit_array_mut!(f, "output.weight", self.out_w, Decay::Yes);
        visit_array_mut!(f, "output.bias", self.out_b, Decay::No);
    }
}

impl Trainable for LstmClassifier {
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
        for (i, (traces, _)) in runs.iter().enumerate() {
            self.backward_doc(traces, d_logits.row(i), &mut grad);
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

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(2);
        let lookup = Arc::new(Array2::from_shape_simple_fn((6, 4), || rng.random_range(-1.0..1.0)));
        let config = LstmConfig {
            hidden: 5,
            layers: 2,
            num_classes: 3,
            seed: 1,
        };
        let mut model = LstmClassifier::init(config, lookup).unwrap();
        let docs = [WordIds(vec![0, 3, 2, 5]), WordIds(vec![1, 1])];
        let refs: Vec<&WordIds> = docs.iter().collect();
        let labels = [2, 0];
        let (_, grads) = model.loss_and_grad(&refs, &labels, None, &mut rng).unwrap();
        let g = grads.flatten();
        let base = model.flatten();
        let eps = 1e-6;
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
            assert!(err < 1e-5, "coordinate {i}: fd {fd} vs {}", g[i]);
        }
    }
}
