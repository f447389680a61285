//! Post-norm transformer encoder with learned positional embeddings.
//!
//! Everything is `f64`. Training uses [`EncoderModel::forward_train`], which
//! keeps the activations needed by [`EncoderModel::backward`].

pub mod ops;

use ndarray::{s, Array1, Array2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use ops::attention;
use ops::{dropout_mask, gelu, gelu_backward, layer_norm, layer_norm_backward, linear, linear_backward};

use crate::params::{Decay, ParamView, ParamViewMut, Parameterized};
use crate::seed::{self, Rng};
use crate::tokenizer::TokenSequence;
use crate::{visit_array, visit_array_mut, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl EncoderConfig {
    /// 4 layers, d=128, 4 heads, ffn 512, 64 positions.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            num_layers: 4,
            hidden_dim: 128,
            num_heads: 4,
            ffn_dim: 512,
            max_positions: 64,
            vocab_size,
            dropout_rate: 0.1,
            seed: 0,
        }
    }

    /// 6 layers, d=768, 12 heads. Used for shape checks only.
    pub fn distilbert_shape(vocab_size: usize) -> Self {
        Self {
            num_layers: 6,
            hidden_dim: 768,
            num_heads: 12,
            ffn_dim: 3072,
            max_positions: 512,
            vocab_size,
            dropout_rate: 0.1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("num_layers", self.num_layers),
            ("hidden_dim", self.hidden_dim),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_positions", self.max_positions),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Parameter count from the shapes alone:
    /// `V·d + P·d + 2d + L·(4d² + 2·d·f + 9d + f)`.
    pub fn parameter_count(&self) -> usize {
        let (v, p, d, f, l) = (
            self.vocab_size,
            self.max_positions,
            self.hidden_dim,
            self.ffn_dim,
            self.num_layers,
        );
        v * d + p * d + 2 * d + l * (4 * d * d + 2 * d * f + 9 * d + f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query_w: Array2<f64>,
    pub query_b: Array1<f64>,
    pub key_w: Array2<f64>,
    pub key_b: Array1<f64>,
    pub value_w: Array2<f64>,
    pub value_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
    pub attn_norm_gain: Array1<f64>,
    pub attn_norm_bias: Array1<f64>,
    pub ffn_in_w: Array2<f64>,
    pub ffn_in_b: Array1<f64>,
    pub ffn_out_w: Array2<f64>,
    pub ffn_out_b: Array1<f64>,
    pub ffn_norm_gain: Array1<f64>,
    pub ffn_norm_bias: Array1<f64>,
}

impl EncoderLayer {
    fn zeros(d: usize, f: usize) -> Self {
        Self {
            query_w: Array2::zeros((d, d)),
            query_b: Array1::zeros(d),
            key_w: Array2::zeros((d, d)),
            key_b: Array1::zeros(d),
            value_w: Array2::zeros((d, d)),
            value_b: Array1::zeros(d),
            out_w: Array2::zeros((d, d)),
            out_b: Array1::zeros(d),
            attn_norm_gain: Array1::zeros(d),
            attn_norm_bias: Array1::zeros(d),
            ffn_in_w: Array2::zeros((d, f)),
            ffn_in_b: Array1::zeros(f),
            ffn_out_w: Array2::zeros((f, d)),
            ffn_out_b: Array1::zeros(d),
            ffn_norm_gain: Array1::zeros(d),
            ffn_norm_bias: Array1::zeros(d),
        }
    }

    fn visit_into<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(ParamView<'a>)) {
        let n = |s: &str| format!("{prefix}.{s}");
        visit_array!(f, n("attention.query.weight"), self.query_w, Decay::Yes);
        visit_array!(f, n("attention.query.bias"), self.query_b, Decay::No);
        visit_array!(f, n("attention.key.weight"), self.key_w, Decay::Yes);
        visit_array!(f, n("attention.key.bias"), self.key_b, Decay::No);
        visit_array!(f, n("attention.value.weight"), self.value_w, Decay::Yes);
        visit_array!(f, n("attention.value.bias"), self.value_b, Decay::No);
        visit_array!(f, n("attention.output.weight"), self.out_w, Decay::Yes);
        visit_array!(f, n("attention.output.bias"), self.out_b, Decay::No);
        visit_array!(f, n("attention.norm.gain"), self.attn_norm_gain, Decay::No);
        visit_array!(f, n("attention.norm.bias"), self.attn_norm_bias, Decay::No);
        visit_array!(f, n("ffn.input.weight"), self.ffn_in_w, Decay::Yes);
        visit_array!(f, n("ffn.input.bias"), self.ffn_in_b, Decay::No);
        visit_array!(f, n("ffn.output.weight"), self.ffn_out_w, Decay::Yes);
        visit_array!(f, n("ffn.output.bias"), self.ffn_out_b, Decay::No);
        visit_array!(f, n("ffn.norm.gain"), self.ffn_norm_gain, Decay::No);
        visit_array!(f, n("ffn.norm.bias"), self.ffn_norm_bias, Decay::No);
    }

    fn visit_into_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        let n = |s: &str| format!("{prefix}.{s}");
        visit_array_mut!(f, n("attention.query.weight"), self.query_w, Decay::Yes);
        visit_array_mut!(f, n("attention.query.bias"), self.query_b, Decay::No);
        visit_array_mut!(f, n("attention.key.weight"), self.key_w, Decay::Yes);
        visit_array_mut!(f, n("attention.key.bias"), self.key_b, Decay::No);
        visit_array_mut!(f, n("attention.value.weight"), self.value_w, Decay::Yes);
        visit_array_mut!(f, n("attention.value.bias"), self.value_b, Decay::No);
        visit_array_mut!(f, n("attention.output.weight"), self.out_w, Decay::Yes);
        visit_array_mut!(f, n("attention.output.bias"), self.out_b, Decay::No);
        visit_array_mut!(f, n("attention.norm.gain"), self.attn_norm_gain, Decay::No);
        visit_array_mut!(f, n("attention.norm.bias"), self.attn_norm_bias, Decay::No);
        visit_array_mut!(f, n("ffn.input.weight"), self.ffn_in_w, Decay::Yes);
        visit_array_mut!(f, n("ffn.input.bias"), self.ffn_in_b, Decay::No);
        visit_array_mut!(f, n("ffn.output.weight"), self.ffn_out_w, Decay::Yes);
        visit_array_mut!(f, n("ffn.output.bias"), self.ffn_out_b, Decay::No);
        visit_array_mut!(f, n("ffn.norm.gain"), self.ffn_norm_gain, Decay::No);
        visit_array_mut!(f, n("ffn.norm.bias"), self.ffn_norm_bias, Decay::No);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub embed_norm_gain: Array1<f64>,
    pub embed_norm_bias: Array1<f64>,
    pub layers: Vec<EncoderLayer>,
}

impl Parameterized for EncoderModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(ParamView<'a>)) {
        visit_array!(f, "embeddings.token", self.token_embedding, Decay::Yes);
        visit_array!(f, "embeddings.position", self.position_embedding, Decay::Yes);
        visit_array!(f, "embeddings.norm.gain", self.embed_norm_gain, Decay::No);
        visit_array!(f, "embeddings.norm.bias", self.embed_norm_bias, Decay::No);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit_into(&format!("layers.{i}"), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(ParamViewMut<'a>)) {
        visit_array_mut!(f, "embeddings.token", self.token_embedding, Decay::Yes);
        visit_array_mut!(f, "embeddings.position", self.position_embedding, Decay::Yes);
        visit_array_mut!(f, "embeddings.norm.gain", self.embed_norm_gain, Decay::No);
        visit_array_mut!(f, "embeddings.norm.bias", self.embed_norm_bias, Decay::No);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_into_mut(&format!("layers.{i}"), f);
        }
    }
}

/// A padded batch of token sequences, trimmed to its longest real sequence.
///
/// Rows are laid out sequence-major: row `b * len + t` is position `t` of
/// sequence `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub size: usize,
    pub len: usize,
}

impl Batch {
    pub fn from_sequences<'a, I>(seqs: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenSequence>,
    {
        let seqs: Vec<&TokenSequence> = seqs.into_iter().collect();
        let len = seqs.iter().map(|s| s.real_len()).max().unwrap_or(1).max(1);
        let mut ids = Vec::with_capacity(seqs.len() * len);
        let mut mask = Vec::with_capacity(seqs.len() * len);
        for s in &seqs {
            ids.extend_from_slice(&s.ids[..len.min(s.ids.len())]);
            mask.extend_from_slice(&s.mask[..len.min(s.mask.len())]);
            for _ in s.ids.len()..len {
                ids.push(crate::tokenizer::PAD_ID);
                mask.push(0);
            }
        }
        Self {
            ids,
            mask,
            size: seqs.len(),
            len,
        }
    }

    pub fn rows(&self) -> usize {
        self.size * self.len
    }

    pub fn sequence_mask(&self, b: usize) -> &[u8] {
        &self.mask[b * self.len..(b + 1) * self.len]
    }
}

struct LayerCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    attn_xhat: Array2<f64>,
    attn_rstd: Array1<f64>,
    h1: Array2<f64>,
    z: Array2<f64>,
    cdf: Array2<f64>,
    g: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
    ffn_xhat: Array2<f64>,
    ffn_rstd: Array1<f64>,
}

/// Activations kept by a training forward pass.
pub struct ForwardCache {
    batch: Batch,
    embed_xhat: Array2<f64>,
    embed_rstd: Array1<f64>,
    embed_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Attention weights of `layer` for sequence `b` and `head`: a
    /// `len × len` matrix whose rows are queries.
    pub fn attention_weights(&self, layer: usize, b: usize, head: usize) -> Option<&Array2<f64>> {
        let cache = self.layers.get(layer)?;
        let heads = cache.probs.len() / self.batch.size.max(1);
        if head >= heads {
            return None;
        }
        cache.probs.get(b * heads + head)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

impl EncoderModel {
    /// Draws parameters from `config.seed`. Weight matrices are
    /// `N(0, 1/fan_in)`, embeddings `N(0, 1/d)`, biases 0 and norm gains 1.
    pub fn init(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let f = config.ffn_dim;
        let mut rng = seed::rng(seed::derive(config.seed, seed::ns::INIT));
        let mut normal = |rows: usize, cols: usize, fan_in: usize| {
            let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
        };
        let token_embedding = normal(config.vocab_size, d, d);
        let position_embedding = normal(config.max_positions, d, d);
        let mut layers = Vec::with_capacity(config.num_layers);
        for _ in 0..config.num_layers {
            let mut layer = EncoderLayer::zeros(d, f);
            layer.query_w = normal(d, d, d);
            layer.key_w = normal(d, d, d);
            layer.value_w = normal(d, d, d);
            layer.out_w = normal(d, d, d);
            layer.ffn_in_w = normal(d, f, d);
            layer.ffn_out_w = normal(f, d, f);
            layer.attn_norm_gain.fill(1.0);
            layer.ffn_norm_gain.fill(1.0);
            layers.push(layer);
        }
        Ok(Self {
            config: config.clone(),
            token_embedding,
            position_embedding,
            embed_norm_gain: Array1::ones(d),
            embed_norm_bias: Array1::zeros(d),
            layers,
        })
    }

    /// A model of the same shape with every parameter 0; used for gradients.
    pub fn zeros_like(&self) -> Self {
        let c = &self.config;
        Self {
            config: c.clone(),
            token_embedding: Array2::zeros(self.token_embedding.dim()),
            position_embedding: Array2::zeros(self.position_embedding.dim()),
            embed_norm_gain: Array1::zeros(c.hidden_dim),
            embed_norm_bias: Array1::zeros(c.hidden_dim),
            layers: (0..c.num_layers)
                .map(|_| EncoderLayer::zeros(c.hidden_dim, c.ffn_dim))
                .collect(),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.len > self.config.max_positions {
            return Err(Error::Shape(format!(
                "sequence length {} exceeds max_positions {}",
                batch.len, self.config.max_positions
            )));
        }
        if batch.ids.len() != batch.rows() || batch.mask.len() != batch.rows() {
            return Err(Error::Shape("batch ids/mask do not match size × len".into()));
        }
        if let Some((i, id)) = batch
            .ids
            .iter()
            .enumerate()
            .find(|(_, &id)| id as usize >= self.config.vocab_size)
        {
            return Err(Error::data(
                format!("sequence {}, position {}", i / batch.len, i % batch.len),
                format!("token id {id} is outside the vocabulary of {}", self.config.vocab_size),
            ));
        }
        Ok(())
    }

    /// Eval-mode forward pass. Returns `(size·len) × d` hidden states.
    pub fn forward(&self, batch: &Batch) -> Result<Array2<f64>> {
        self.run(batch, None).map(|(h, _)| h)
    }

    /// Training forward pass with dropout drawn from `rng` (if the rate is
    /// positive). Keeps activations for [`Self::backward`].
    pub fn forward_train(&self, batch: &Batch, rng: Option<&mut Rng>) -> Result<(Array2<f64>, ForwardCache)> {
        let (h, cache) = self.run(batch, Some(rng))?;
        Ok((h, cache.expect("training pass keeps a cache")))
    }

    fn run(
        &self,
        batch: &Batch,
        train: Option<Option<&mut Rng>>,
    ) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        self.check_batch(batch)?;
        let d = self.config.hidden_dim;
        let n = batch.rows();
        let keep_cache = train.is_some();
        let rate = self.config.dropout_rate;
        let mut rng = train.flatten().filter(|_| rate > 0.0);

        let mut x = Array2::<f64>::zeros((n, d));
        for (r, mut row) in x.outer_iter_mut().enumerate() {
            let t = r % batch.len;
            row.assign(&self.token_embedding.row(batch.ids[r] as usize));
            row += &self.position_embedding.row(t);
        }
        let (mut x, embed_xhat, embed_rstd) = layer_norm(&x, &self.embed_norm_gain, &self.embed_norm_bias);
        let embed_drop = rng.as_deref_mut().map(|r| dropout_mask(n, d, rate, r));
        if let Some(m) = &embed_drop {
            x *= m;
        }

        let mut caches = Vec::new();
        for layer in &self.layers {
            let (out, cache) = self.layer_forward(layer, x, batch, rng.as_deref_mut(), rate, keep_cache)?;
            x = out;
            if let Some(c) = cache {
                caches.push(c);
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite hidden state in encoder output".into()));
        }
        let cache = keep_cache.then(|| ForwardCache {
            batch: batch.clone(),
            embed_xhat,
            embed_rstd,
            embed_drop,
            layers: caches,
        });
        Ok((x, cache))
    }

    fn layer_forward(
        &self,
        layer: &EncoderLayer,
        input: Array2<f64>,
        batch: &Batch,
        mut rng: Option<&mut Rng>,
        rate: f64,
        keep_cache: bool,
    ) -> Result<(Array2<f64>, Option<LayerCache>)> {
        let (n, d) = input.dim();
        let heads = self.config.num_heads;
        let dh = self.config.head_dim();
        let len = batch.len;

        let q = linear(&input, &layer.query_w, &layer.query_b);
        let k = linear(&input, &layer.key_w, &layer.key_b);
        let v = linear(&input, &layer.value_w, &layer.value_b);
        let mut context = Array2::<f64>::zeros((n, d));
        let mut probs = Vec::with_capacity(if keep_cache { batch.size * heads } else { 0 });
        for b in 0..batch.size {
            let rows = b * len..(b + 1) * len;
            let mask = batch.sequence_mask(b);
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let (o, p) = attention(
                    q.slice(s![rows.clone(), cols.clone()]),
                    k.slice(s![rows.clone(), cols.clone()]),
                    v.slice(s![rows.clone(), cols.clone()]),
                    mask,
                )?;
                context.slice_mut(s![rows.clone(), cols]).assign(&o);
                if keep_cache {
                    probs.push(p);
                }
            }
        }
        let mut attn = linear(&context, &layer.out_w, &layer.out_b);
        let attn_drop = rng.as_deref_mut().map(|r| dropout_mask(n, d, rate, r));
        if let Some(m) = &attn_drop {
            attn *= m;
        }
        attn += &input;
        let (h1, attn_xhat, attn_rstd) = layer_norm(&attn, &layer.attn_norm_gain, &layer.attn_norm_bias);

        let z = linear(&h1, &layer.ffn_in_w, &layer.ffn_in_b);
        let (g, cdf) = gelu(&z);
        let mut ffn = linear(&g, &layer.ffn_out_w, &layer.ffn_out_b);
        let ffn_drop = rng.as_deref_mut().map(|r| dropout_mask(n, d, rate, r));
        if let Some(m) = &ffn_drop {
            ffn *= m;
        }
        ffn += &h1;
        let (out, ffn_xhat, ffn_rstd) = layer_norm(&ffn, &layer.ffn_norm_gain, &layer.ffn_norm_bias);

        let cache = keep_cache.then(|| LayerCache {
            input,
            q,
            k,
            v,
            probs,
            context,
            attn_drop,
            attn_xhat,
            attn_rstd,
            h1,
            z,
            cdf,
            g,
            ffn_drop,
            ffn_xhat,
            ffn_rstd,
        });
        Ok((out, cache))
    }

    /// Gradients of all parameters given the gradient of the loss with
    /// respect to the hidden states returned by the matching forward pass.
    pub fn backward(&self, cache: &ForwardCache, d_hidden: &Array2<f64>) -> Result<Self> {
        let batch = &cache.batch;
        if d_hidden.dim() != (batch.rows(), self.config.hidden_dim) {
            return Err(Error::Shape(format!(
                "hidden gradient {:?} for {} rows of width {}",
                d_hidden.dim(),
                batch.rows(),
                self.config.hidden_dim
            )));
        }
        let mut grads = self.zeros_like();
        let mut dx = d_hidden.clone();
        for (i, lc) in cache.layers.iter().enumerate().rev() {
            dx = self.layer_backward(&self.layers[i], &mut grads.layers[i], lc, batch, dx);
        }

        if let Some(m) = &cache.embed_drop {
            dx *= m;
        }
        let de = layer_norm_backward(
            &dx,
            &cache.embed_xhat,
            &cache.embed_rstd,
            &self.embed_norm_gain,
            &mut grads.embed_norm_gain,
            &mut grads.embed_norm_bias,
        );
        for (r, row) in de.outer_iter().enumerate() {
            let t = r % batch.len;
            let mut tok = grads.token_embedding.row_mut(batch.ids[r] as usize);
            tok += &row;
            let mut pos = grads.position_embedding.row_mut(t);
            pos += &row;
        }
        Ok(grads)
    }

    fn layer_backward(
        &self,
        layer: &EncoderLayer,
        grad: &mut EncoderLayer,
        c: &LayerCache,
        batch: &Batch,
        d_out: Array2<f64>,
    ) -> Array2<f64> {
        let heads = self.config.num_heads;
        let dh = self.config.head_dim();
        let len = batch.len;
        let scale = 1.0 / (dh as f64).sqrt();

        let d_ffn = layer_norm_backward(
            &d_out,
            &c.ffn_xhat,
            &c.ffn_rstd,
            &layer.ffn_norm_gain,
            &mut grad.ffn_norm_gain,
            &mut grad.ffn_norm_bias,
        );
        let mut d_h1 = d_ffn.clone();
        let mut d_f = d_ffn;
        if let Some(m) = &c.ffn_drop {
            d_f *= m;
        }
        let d_g = linear_backward(&d_f, &c.g, &layer.ffn_out_w, &mut grad.ffn_out_w, &mut grad.ffn_out_b);
        let d_z = gelu_backward(&d_g, &c.z, &c.cdf);
        d_h1 += &linear_backward(&d_z, &c.h1, &layer.ffn_in_w, &mut grad.ffn_in_w, &mut grad.ffn_in_b);

        let d_attn = layer_norm_backward(
            &d_h1,
            &c.attn_xhat,
            &c.attn_rstd,
            &layer.attn_norm_gain,
            &mut grad.attn_norm_gain,
            &mut grad.attn_norm_bias,
        );
        let mut d_input = d_attn.clone();
        let mut d_a = d_attn;
        if let Some(m) = &c.attn_drop {
            d_a *= m;
        }
        let d_context = linear_backward(&d_a, &c.context, &layer.out_w, &mut grad.out_w, &mut grad.out_b);

        let shape = c.q.dim();
        let mut d_q = Array2::<f64>::zeros(shape);
        let mut d_k = Array2::<f64>::zeros(shape);
        let mut d_v = Array2::<f64>::zeros(shape);
        for b in 0..batch.size {
            let rows = b * len..(b + 1) * len;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let p = &c.probs[b * heads + h];
                let dctx = d_context.slice(s![rows.clone(), cols.clone()]);
                let vv = c.v.slice(s![rows.clone(), cols.clone()]);
                let qq = c.q.slice(s![rows.clone(), cols.clone()]);
                let kk = c.k.slice(s![rows.clone(), cols.clone()]);

                let d_p = dctx.dot(&vv.t());
                d_v.slice_mut(s![rows.clone(), cols.clone()]).assign(&p.t().dot(&dctx));
                let mut d_s = d_p;
                for (mut ds_row, p_row) in d_s.outer_iter_mut().zip(p.outer_iter()) {
                    let dot: f64 = ds_row.iter().zip(p_row).map(|(a, b)| a * b).sum();
                    for (ds, &pv) in ds_row.iter_mut().zip(p_row) {
                        *ds = pv * (*ds - dot) * scale;
                    }
                }
                d_q.slice_mut(s![rows.clone(), cols.clone()]).assign(&d_s.dot(&kk));
                d_k.slice_mut(s![rows.clone(), cols]).assign(&d_s.t().dot(&qq));
            }
        }
        d_input += &linear_backward(&d_q, &c.input, &layer.query_w, &mut grad.query_w, &mut grad.query_b);
        d_input += &linear_backward(&d_k, &c.input, &layer.key_w, &mut grad.key_w, &mut grad.key_b);
        d_input += &linear_backward(&d_v, &c.input, &layer.value_w, &mut grad.value_w, &mut grad.value_b);
        d_input
    }
}

/// Rows at position 0 (`[CLS]`) of each sequence.
pub fn cls_rows(hidden: &Array2<f64>, batch: &Batch) -> Array2<f64> {
    let mut out = Array2::zeros((batch.size, hidden.ncols()));
    for b in 0..batch.size {
        out.row_mut(b).assign(&hidden.row(b * batch.len));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{checksum, layout};
    use rand::Rng as _;

    fn tiny(seed: u64) -> EncoderConfig {
        EncoderConfig {
            num_layers: 2,
            hidden_dim: 16,
            num_heads: 2,
            ffn_dim: 32,
            max_positions: 12,
            vocab_size: 30,
            dropout_rate: 0.1,
            seed,
        }
    }

    fn seq(ids: &[u32], max_len: usize) -> TokenSequence {
        let mut full = ids.to_vec();
        let mut mask = vec![1u8; ids.len()];
        full.resize(max_len, 0);
        mask.resize(max_len, 0);
        TokenSequence {
            ids: full,
            mask,
            original_length: ids.len(),
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = EncoderModel::init(&tiny(5)).unwrap();
        let b = EncoderModel::init(&tiny(5)).unwrap();
        assert_eq!(checksum(&a), checksum(&b));
        assert_eq!(a.flatten(), b.flatten());
        let c = EncoderModel::init(&tiny(6)).unwrap();
        assert_ne!(checksum(&a), checksum(&c));
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut c = EncoderConfig::desk(100);
        c.hidden_dim = 130;
        assert!(EncoderModel::init(&c).is_err());
        c.hidden_dim = 128;
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parameter_count_matches_enumeration() {
        for cfg in [EncoderConfig::desk(2000), tiny(0)] {
            let m = EncoderModel::init(&cfg).unwrap();
            let enumerated: usize = layout(&m).iter().map(|(_, s, _)| s.iter().product::<usize>()).sum();
            assert_eq!(enumerated, cfg.parameter_count());
            assert_eq!(m.num_parameters(), cfg.parameter_count());
        }
    }

    #[test]
    fn distilbert_shape_count() {
        let cfg = EncoderConfig::distilbert_shape(30522);
        let layer = 4 * 768 * 768 + 4 * 768 + 2 * 768 + 2 * 768 * 3072 + 3072 + 768 + 2 * 768;
        assert_eq!(cfg.parameter_count(), 30522 * 768 + 512 * 768 + 2 * 768 + 6 * layer);
    }

    #[test]
    fn identical_sequences_identical_rows() {
        let m = EncoderModel::init(&tiny(1)).unwrap();
        let s = seq(&[2, 7, 9, 11], 8);
        let batch = Batch::from_sequences([&s, &s]);
        assert_eq!(batch.len, 4);
        let h = m.forward(&batch).unwrap();
        for t in 0..4 {
            assert_eq!(h.row(t), h.row(4 + t));
        }
        assert_eq!(h, m.forward(&batch).unwrap());
    }

    #[test]
    fn outputs_are_finite() {
        let mut rng = seed::rng(3);
        for s in 0..5 {
            let m = EncoderModel::init(&tiny(s)).unwrap();
            let seqs: Vec<TokenSequence> = (0..4)
                .map(|_| {
                    let n = rng.random_range(1..12);
                    let ids: Vec<u32> = (0..n).map(|_| rng.random_range(0..30)).collect();
                    seq(&ids, 12)
                })
                .collect();
            let h = m.forward(&Batch::from_sequences(&seqs)).unwrap();
            assert!(h.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn padding_does_not_change_real_positions() {
        let m = EncoderModel::init(&tiny(2)).unwrap();
        let short = seq(&[2, 5, 6], 12);
        let long = seq(&[2, 8, 9, 10, 11, 12, 13], 12);
        let alone = m.forward(&Batch::from_sequences([&short])).unwrap();
        let together = m.forward(&Batch::from_sequences([&short, &long])).unwrap();
        for t in 0..3 {
            for j in 0..16 {
                assert!((alone[[t, j]] - together[[t, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn permutation_changes_output() {
        let m = EncoderModel::init(&tiny(4)).unwrap();
        let a = seq(&[2, 5, 6, 7], 8);
        let b = seq(&[2, 7, 6, 5], 8);
        let ha = m.forward(&Batch::from_sequences([&a])).unwrap();
        let hb = m.forward(&Batch::from_sequences([&b])).unwrap();
        assert_ne!(ha.row(0), hb.row(0));
    }

    #[test]
    fn out_of_range_id_is_rejected() {
        let m = EncoderModel::init(&tiny(0)).unwrap();
        let s = seq(&[2, 30], 4);
        assert!(m.forward(&Batch::from_sequences([&s])).is_err());
    }

    #[test]
    fn dropout_only_in_training() {
        let m = EncoderModel::init(&tiny(9)).unwrap();
        let s = seq(&[2, 3, 4, 5, 6], 8);
        let batch = Batch::from_sequences([&s]);
        let eval = m.forward(&batch).unwrap();
        let mut rng = seed::rng(1);
        let (train, _) = m.forward_train(&batch, Some(&mut rng)).unwrap();
        assert_ne!(eval, train);
        let (no_drop, _) = m.forward_train(&batch, None).unwrap();
        assert_eq!(eval, no_drop);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut cfg = tiny(11);
        cfg.dropout_rate = 0.0;
        let mut model = EncoderModel::init(&cfg).unwrap();
        let seqs = [seq(&[2, 5, 9, 3], 6), seq(&[2, 17, 4, 4, 21, 8], 6)];
        let batch = Batch::from_sequences(&seqs);
        let mut rng = seed::rng(12);
        let proj = Array2::from_shape_simple_fn((batch.rows(), 16), || rng.random_range(-1.0..1.0));
        // loss = Σ proj ⊙ H over unmasked rows
        let mut weight = proj.clone();
        for (r, &m) in batch.mask.iter().enumerate() {
            if m == 0 {
                weight.row_mut(r).fill(0.0);
            }
        }
        let loss = |m: &EncoderModel| (m.forward(&batch).unwrap() * &weight).sum();
        let (_, cache) = model.forward_train(&batch, None).unwrap();
        let grads = model.backward(&cache, &weight).unwrap().flatten();
        let base = model.flatten();
        let eps = 1e-5;
        let mut checked = 0;
        for i in (0..base.len()).step_by(7) {
            let mut p = base.clone();
            p[i] += eps;
            model.assign_flat(&p).unwrap();
            let lp = loss(&model);
            p[i] -= 2.0 * eps;
            model.assign_flat(&p).unwrap();
            let lm = loss(&model);
            let fd = (lp - lm) / (2.0 * eps);
            let err = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-5);
            assert!(err < 1e-4, "coordinate {i}: fd {fd} analytic {}", grads[i]);
            checked += 1;
        }
        model.assign_flat(&base).unwrap();
        assert!(checked > 100);
    }
}
