use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Mat;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Output and weights of one scaled dot-product attention call.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub output: Mat,
    pub weights: Mat,
}

/// `softmax(Q K^T / sqrt(d_k) + mask_bias) V`, with masked keys at `-inf`.
pub fn attention(q: &Mat, k: &Mat, v: &Mat, mask: &[u8]) -> Result<Attention> {
    if q.cols != k.cols {
        return Err(Error::Usage(format!("query width {} vs key width {}", q.cols, k.cols)));
    }
    if k.rows != v.rows {
        return Err(Error::Usage(format!("{} keys vs {} values", k.rows, v.rows)));
    }
    if mask.len() != k.rows {
        return Err(Error::Usage(format!("mask length {} vs {} keys", mask.len(), k.rows)));
    }
    if !mask.iter().any(|&m| m != 0) {
        return Err(Error::Usage("every key position is masked".into()));
    }
    let weights = attention_weights(q, k, mask);
    let output = weights.matmul(v);
    Ok(Attention { output, weights })
}

/// Row-stochastic attention weights; masked columns are exactly zero.
pub(crate) fn attention_weights(q: &Mat, k: &Mat, mask: &[u8]) -> Mat {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut s = q.matmul_t(k);
    for i in 0..s.rows {
        let row = s.row_mut(i);
        let mut max = f64::NEG_INFINITY;
        for (x, &m) in row.iter_mut().zip(mask) {
            *x *= scale;
            if m != 0 && *x > max {
                max = *x;
            }
        }
        let mut sum = 0.0;
        for (x, &m) in row.iter_mut().zip(mask) {
            *x = if m != 0 { (*x - max).exp() } else { 0.0 };
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    s
}

/// Backward of [`attention_weights`] for one head. Accumulates into `dq`, `dk`.
pub(crate) fn attention_weights_backward(probs: &Mat, dprobs: &Mat, q: &Mat, k: &Mat, dq: &mut Mat, dk: &mut Mat) {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut ds = Mat::zeros(probs.rows, probs.cols);
    for i in 0..probs.rows {
        let p = probs.row(i);
        let dp = dprobs.row(i);
        let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
        for ((d, &pv), &dpv) in ds.row_mut(i).iter_mut().zip(p).zip(dp) {
            *d = scale * pv * (dpv - inner);
        }
    }
    dq.add_assign(&ds.matmul(k));
    ds.t_matmul_into(q, dk);
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)) + x * pdf
}

/// Per-row standardization before gain and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub xhat: Mat,
    pub inv_std: Vec<f64>,
}

pub fn normalize_rows(x: &Mat) -> Normalized {
    let n = x.cols as f64;
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (o, &v) in xhat.row_mut(i).iter_mut().zip(row) {
            *o = (v - mean) * r;
        }
        inv_std.push(r);
    }
    Normalized { xhat, inv_std }
}

pub(crate) fn layer_norm(x: &Mat, gain: &[f64], offset: &[f64]) -> (Mat, Normalized) {
    let norm = normalize_rows(x);
    let mut y = norm.xhat.clone();
    for i in 0..y.rows {
        for ((o, &g), &b) in y.row_mut(i).iter_mut().zip(gain).zip(offset) {
            *o = *o * g + b;
        }
    }
    (y, norm)
}

pub(crate) fn layer_norm_backward(
    dy: &Mat,
    norm: &Normalized,
    gain: &[f64],
    dgain: &mut [f64],
    doffset: &mut [f64],
) -> Mat {
    let n = dy.cols as f64;
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    let mut dxhat = vec![0.0; dy.cols];
    for i in 0..dy.rows {
        let xh = norm.xhat.row(i);
        let d = dy.row(i);
        for j in 0..dy.cols {
            dgain[j] += d[j] * xh[j];
            doffset[j] += d[j];
            dxhat[j] = d[j] * gain[j];
        }
        let sum: f64 = dxhat.iter().sum();
        let dot: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
        let r = norm.inv_std[i] / n;
        for ((o, &dh), &x) in dx.row_mut(i).iter_mut().zip(&dxhat).zip(xh) {
            *o = r * (n * dh - sum - x * dot);
        }
    }
    dx
}

/// Inverted-dropout scale factors (0 or `1/(1-p)`), or `None` when inactive.
pub(crate) fn dropout_mask(len: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..len).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect())
}

pub(crate) fn apply_mask(x: &mut [f64], mask: Option<&Vec<f64>>) {
    if let Some(m) = mask {
        for (v, &s) in x.iter_mut().zip(m) {
            *v *= s;
        }
    }
}
