use serde::{Deserialize, Serialize};

use crate::params::{Decay, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    AdamW,
    Adam,
    Sgd,
}

impl Optimizer {
    pub const ALL: [Optimizer; 3] = [Optimizer::AdamW, Optimizer::Adam, Optimizer::Sgd];

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::AdamW => "adamw",
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adamw" => Ok(Optimizer::AdamW),
            "adam" => Ok(Optimizer::Adam),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(Error::Config(format!(
                "unknown optimizer '{other}' (expected adamw, adam or sgd)"
            ))),
        }
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Optimizer state for one model. Moment buffers are created on the first
/// step and follow the model's parameter visit order.
///
/// AdamW subtracts `lr · wd · θ` separately from the moment update. Adam adds
/// `wd · θ` to the gradient instead. SGD is `θ -= lr · (g + wd · θ)`. Tensors
/// flagged [`Decay::No`] are never decayed.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: Optimizer,
    pub learning_rate: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            learning_rate,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameterized>(&mut self, model: &mut P, grads: &P) {
        let mut gs: Vec<&[f64]> = Vec::new();
        grads.visit(&mut |p| gs.push(p.data));
        if self.kind != Optimizer::Sgd && self.m.is_empty() {
            self.m = gs.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let kind = self.kind;
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut i = 0;
        model.visit_mut(&mut |p| {
            let g = gs[i];
            let decay = if p.decay == Decay::Yes { wd } else { 0.0 };
            match kind {
                Optimizer::Sgd => {
                    for (w, &gj) in p.data.iter_mut().zip(g) {
                        *w -= lr * (gj + decay * *w);
                    }
                }
                Optimizer::Adam | Optimizer::AdamW => {
                    let (m, v) = (&mut ms[i], &mut vs[i]);
                    for j in 0..p.data.len() {
                        let w = &mut p.data[j];
                        let mut gj = g[j];
                        if kind == Optimizer::Adam {
                            gj += decay * *w;
                        }
                        m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                        v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                        let update = (m[j] / bc1) / ((v[j] / bc2).sqrt() + EPSILON);
                        if kind == Optimizer::AdamW && decay != 0.0 {
                            *w -= lr * decay * *w;
                        }
                        *w -= lr * update;
                    }
                }
            }
            i += 1;
        });
    }
}

/// Scales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Parameterized>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = crate::params::global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.visit_mut(&mut |p| p.data.iter_mut().for_each(|g| *g *= s));
    }
    norm
}
