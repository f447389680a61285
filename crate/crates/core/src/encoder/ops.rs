//! Dense building blocks with their backward passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;

use crate::seed::Rng;
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-12;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Row-wise layer normalization. Returns (output, normalized input, 1/std).
pub fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let (n, d) = x.dim();
    let mut xhat = Array2::<f64>::zeros((n, d));
    let mut rstd = Array1::<f64>::zeros(n);
    for (i, row) in x.outer_iter().enumerate() {
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd[i] = r;
        for (o, v) in xhat.row_mut(i).iter_mut().zip(row) {
            *o = (v - mean) * r;
        }
    }
    let y = &xhat * gamma + beta;
    (y, xhat, rstd)
}

/// Backward of [`layer_norm`]: returns dx and accumulates dgamma, dbeta.
pub fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    rstd: &Array1<f64>,
    gamma: &Array1<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    let (n, d) = dy.dim();
    *dgamma += &(dy * xhat).sum_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0));
    let mut dx = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let dy_r = dy.row(i);
        let xh = xhat.row(i);
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for j in 0..d {
            let g = dy_r[j] * gamma[j];
            mean_g += g;
            mean_gx += g * xh[j];
        }
        mean_g /= d as f64;
        mean_gx /= d as f64;
        let r = rstd[i];
        for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
            let g = dy_r[j] * gamma[j];
            *o = r * (g - mean_g - xh[j] * mean_gx);
        }
    }
    dx
}

/// Standard normal CDF.
fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Exact (erf-based) GELU. Returns (activation, Φ(x)) so the backward pass can
/// reuse the CDF.
pub fn gelu(z: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let cdf = z.mapv(phi_cdf);
    let out = z * &cdf;
    (out, cdf)
}

/// dz given d(gelu(z)), z and Φ(z).
pub fn gelu_backward(dg: &Array2<f64>, z: &Array2<f64>, cdf: &Array2<f64>) -> Array2<f64> {
    let mut dz = dg.clone();
    ndarray::Zip::from(&mut dz).and(z).and(cdf).for_each(|d, &z, &c| {
        let pdf = FRAC_1_SQRT_2PI * (-0.5 * z * z).exp();
        *d *= c + z * pdf;
    });
    dz
}

/// `x · w + b`.
pub fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Accumulates dw, db and returns dx for `y = x · w + b`.
pub fn linear_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

/// Softmax over the entries where `keep` is true; others get exactly 0.
pub fn masked_softmax_row(scores: &mut [f64], keep: &[u8]) {
    let max = scores
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k != 0)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        scores.fill(0.0);
        return;
    }
    let mut sum = 0.0;
    for (s, &k) in scores.iter_mut().zip(keep) {
        if k != 0 {
            *s = (*s - max).exp();
            sum += *s;
        } else {
            *s = 0.0;
        }
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Plain softmax of a vector.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// Scaled dot-product attention for one head: `softmax(Q Kᵀ / √d_k) V`, with
/// keys whose `key_mask` entry is 0 excluded. Returns (output, weights).
pub fn attention(
    queries: ArrayView2<f64>,
    keys: ArrayView2<f64>,
    values: ArrayView2<f64>,
    key_mask: &[u8],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (nq, dk) = queries.dim();
    if keys.ncols() != dk || keys.nrows() != values.nrows() || key_mask.len() != keys.nrows() {
        return Err(Error::Shape(format!(
            "attention: queries {:?}, keys {:?}, values {:?}, mask {}",
            queries.dim(),
            keys.dim(),
            values.dim(),
            key_mask.len()
        )));
    }
    let scale = 1.0 / (dk as f64).sqrt();
    let mut weights = queries.dot(&keys.t());
    weights *= scale;
    for i in 0..nq {
        let mut row = weights.row_mut(i);
        masked_softmax_row(row.as_slice_mut().expect("contiguous"), key_mask);
    }
    let out = weights.dot(&values);
    Ok((out, weights))
}

/// Inverted dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    })
}
