//! Forward and backward passes for the layer set the models use.
//!
//! Layers are free functions over explicit weights; callers keep whatever
//! activations the backward pass needs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    AvgAll,
    None,
}

/// Sliding-window convolution over rows: `filters` filters of `window` rows,
/// advanced by `stride`, followed by a pooling stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub window: usize,
    pub filters: usize,
    pub stride: usize,
    pub pool: PoolKind,
    pub pool_len: usize,
}

impl ConvSpec {
    pub fn new(window: usize, filters: usize, stride: usize, pool: PoolKind, pool_len: usize) -> Result<Self> {
        let spec = Self {
            window,
            filters,
            stride,
            pool,
            pool_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.filters == 0 || self.stride == 0 || self.pool_len == 0 {
            return Err(Error::Config(format!(
                "convolution sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of output rows for an input of `len` rows.
    pub fn out_len(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.stride + 1
        }
    }

    pub fn weight_len(&self, input_dim: usize) -> usize {
        self.filters * self.window * input_dim
    }
}

/// Pre-activation convolution: `out[r][f] = b[f] + W[f] · input[r·s .. r·s+k]`.
///
/// `weights` is `[filters × (window·d_in)]`, one filter per row, window rows
/// laid out consecutively.
pub fn conv1d_forward(input: &Tensor2, spec: &ConvSpec, weights: &[f64], bias: &[f64]) -> Result<Tensor2> {
    let d = input.cols();
    let span = spec.window * d;
    if weights.len() != spec.filters * span || bias.len() != spec.filters {
        return Err(Error::Shape(format!(
            "conv weights {}/{} for {} filters over {}x{d} windows",
            weights.len(),
            bias.len(),
            spec.filters,
            spec.window
        )));
    }
    if input.rows() < spec.window {
        return Err(Error::Shape(format!(
            "input of {} rows shorter than window {}",
            input.rows(),
            spec.window
        )));
    }
    let rows = spec.out_len(input.rows());
    let mut out = Tensor2::zeros(rows, spec.filters);
    for r in 0..rows {
        let x = input.rows_slice(r * spec.stride, spec.window);
        let o = out.row_mut(r);
        for (f, of) in o.iter_mut().enumerate() {
            *of = bias[f] + dot(&weights[f * span..(f + 1) * span], x);
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients into `grad_w`/`grad_b`; returns the
/// input gradient when `need_input` is set.
pub fn conv1d_backward(
    input: &Tensor2,
    spec: &ConvSpec,
    weights: &[f64],
    grad_out: &Tensor2,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    need_input: bool,
) -> Result<Option<Tensor2>> {
    let d = input.cols();
    let span = spec.window * d;
    if grad_out.rows() != spec.out_len(input.rows()) || grad_out.cols() != spec.filters {
        return Err(Error::Shape("conv upstream gradient shape".into()));
    }
    let mut grad_in = need_input.then(|| Tensor2::zeros(input.rows(), d));
    for r in 0..grad_out.rows() {
        let x = input.rows_slice(r * spec.stride, spec.window);
        for (f, &g) in grad_out.row(r).iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad_b[f] += g;
            axpy(g, x, &mut grad_w[f * span..(f + 1) * span]);
            if let Some(gi) = grad_in.as_mut() {
                let start = r * spec.stride * d;
                axpy(g, &weights[f * span..(f + 1) * span], &mut gi.data_mut()[start..start + span]);
            }
        }
    }
    Ok(grad_in)
}

pub fn relu_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `grad` by the positive entries of the ReLU output (or input).
pub fn relu_backward_inplace(activation: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Per-column maximum over consecutive blocks of `n` rows; the trailing
/// partial block is pooled over its actual length. Also returns the source
/// row of every output entry.
pub fn max_pool(features: &Tensor2, n: usize) -> Result<(Tensor2, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("pool length must be positive"));
    }
    if features.rows() == 0 {
        return Err(Error::Shape("max pool over zero rows".into()));
    }
    let cols = features.cols();
    let blocks = features.rows().div_ceil(n);
    let mut out = Tensor2::zeros(blocks, cols);
    let mut arg = vec![0usize; blocks * cols];
    for b in 0..blocks {
        let end = ((b + 1) * n).min(features.rows());
        for c in 0..cols {
            let mut best = b * n;
            for r in b * n + 1..end {
                if features.get(r, c) > features.get(best, c) {
                    best = r;
                }
            }
            out.row_mut(b)[c] = features.get(best, c);
            arg[b * cols + c] = best;
        }
    }
    Ok((out, arg))
}

pub fn max_pool_backward(input_rows: usize, argmax: &[usize], grad_out: &Tensor2) -> Tensor2 {
    let cols = grad_out.cols();
    let mut g = Tensor2::zeros(input_rows, cols);
    for (i, &g_out) in grad_out.data().iter().enumerate() {
        let c = i % cols;
        g.row_mut(argmax[i])[c] += g_out;
    }
    g
}

/// Column means.
pub fn avg_pool_all(features: &Tensor2) -> Result<Vec<f64>> {
    if features.rows() == 0 {
        return Err(Error::Shape("average pool over zero rows".into()));
    }
    let mut out = vec![0.0; features.cols()];
    for r in 0..features.rows() {
        axpy(1.0, features.row(r), &mut out);
    }
    let n = features.rows() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

pub fn avg_pool_all_backward(rows: usize, grad_out: &[f64]) -> Tensor2 {
    let mut g = Tensor2::zeros(rows, grad_out.len());
    let scale = 1.0 / rows as f64;
    for r in 0..rows {
        axpy(scale, grad_out, g.row_mut(r));
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Softmax,
}

/// Affine map `W·x + b` with `W` stored `[out × in]`.
pub fn affine(x: &[f64], weights: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    let out = bias.len();
    if out == 0 || weights.len() != out * x.len() {
        return Err(Error::Shape(format!(
            "dense layer {}x? with {} weights cannot take input of {}",
            out,
            weights.len(),
            x.len()
        )));
    }
    let n = x.len();
    Ok((0..out)
        .map(|o| bias[o] + dot(&weights[o * n..(o + 1) * n], x))
        .collect())
}

pub fn dense_forward(x: &[f64], weights: &[f64], bias: &[f64], activation: Activation) -> Result<Vec<f64>> {
    let mut z = affine(x, weights, bias)?;
    match activation {
        Activation::Relu => relu_inplace(&mut z),
        Activation::Linear => {}
        Activation::Softmax => z = softmax(&z),
    }
    Ok(z)
}

/// Backward through the affine part; `grad_pre` is the gradient of the
/// pre-activation. Accumulates into `grad_w`/`grad_b` and returns `∂/∂x`.
pub fn affine_backward(
    x: &[f64],
    weights: &[f64],
    grad_pre: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    let n = x.len();
    let mut gx = vec![0.0; n];
    for (o, &g) in grad_pre.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad_b[o] += g;
        axpy(g, x, &mut grad_w[o * n..(o + 1) * n]);
        axpy(g, &weights[o * n..(o + 1) * n], &mut gx);
    }
    gx
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Gradient of the logits given the softmax output and its upstream gradient.
pub fn softmax_backward(y: &[f64], grad_y: &[f64]) -> Vec<f64> {
    let inner = dot(y, grad_y);
    y.iter().zip(grad_y).map(|(yi, gi)| yi * (gi - inner)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and the per-entry multiplier
/// (0 or `1/(1−rate)`), which is also the backward mask.
pub fn dropout<R: Rng>(x: &[f64], rate: f64, mode: Mode, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Ok((x.iter().zip(&mask).map(|(v, m)| v * m).collect(), mask))
}

/// Row-gather from an embedding table `[vocab × dim]`.
pub fn embed(table: &[f64], dim: usize, ids: &[u32]) -> Result<Tensor2> {
    let vocab = table.len() / dim.max(1);
    let mut data = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        let id = id as usize;
        if id >= vocab {
            return Err(Error::Shape(format!("token id {id} outside vocabulary of {vocab}")));
        }
        data.extend_from_slice(&table[id * dim..(id + 1) * dim]);
    }
    Tensor2::new(ids.len(), dim, data)
}

pub fn embed_backward(grad_table: &mut [f64], dim: usize, ids: &[u32], grad_rows: &Tensor2) {
    for (r, &id) in ids.iter().enumerate() {
        let id = id as usize;
        axpy(1.0, grad_rows.row(r), &mut grad_table[id * dim..(id + 1) * dim]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;

    fn col(v: &[f64]) -> Tensor2 {
        Tensor2::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_filter() {
        let spec = ConvSpec::new(1, 1, 1, PoolKind::None, 1).unwrap();
        let x = col(&[0.5, -2.0, 3.0]);
        let y = conv1d_forward(&x, &spec, &[1.0], &[0.0]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_zero_input_gives_bias() {
        let spec = ConvSpec::new(2, 3, 1, PoolKind::None, 1).unwrap();
        let x = Tensor2::zeros(5, 2);
        let w = vec![0.7; spec.weight_len(2)];
        let y = conv1d_forward(&x, &spec, &w, &[1.0, -1.0, 0.5]).unwrap();
        assert_eq!(y.rows(), 4);
        for r in 0..4 {
            assert_eq!(y.row(r), &[1.0, -1.0, 0.5]);
        }
    }

    #[test]
    fn conv_hand_example() {
        let spec = ConvSpec::new(2, 1, 1, PoolKind::None, 1).unwrap();
        let y = conv1d_forward(&col(&[1.0, 2.0, 3.0, 4.0]), &spec, &[1.0, 1.0], &[0.0]).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv_stride_and_short_input() {
        let spec = ConvSpec::new(2, 1, 2, PoolKind::None, 1).unwrap();
        let y = conv1d_forward(&col(&[1.0, 2.0, 3.0, 4.0, 5.0]), &spec, &[1.0, 1.0], &[0.0]).unwrap();
        assert_eq!(y.data(), &[3.0, 7.0]);
        assert!(conv1d_forward(&col(&[1.0]), &spec, &[1.0, 1.0], &[0.0]).is_err());
        assert!(ConvSpec::new(0, 1, 1, PoolKind::Max, 1).is_err());
    }

    #[test]
    fn max_pool_examples() {
        let (y, _) = max_pool(&col(&[1.0, 5.0, 3.0]), 3).unwrap();
        assert_eq!(y.data(), &[5.0]);
        let x = col(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(max_pool(&x, 1).unwrap().0, x);
        let (y, arg) = max_pool(&x, 2).unwrap();
        assert_eq!(y.data(), &[2.0, 4.0, 5.0]);
        assert_eq!(arg, vec![1, 3, 4]);
    }

    #[test]
    fn avg_pool_examples() {
        assert_eq!(avg_pool_all(&Tensor2::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap(), vec![1.0, 2.0]);
        assert_eq!(avg_pool_all(&col(&[0.0, 2.0])).unwrap(), vec![1.0]);
        let c = Tensor2::new(3, 2, vec![4.0; 6]).unwrap();
        assert_eq!(avg_pool_all(&c).unwrap(), vec![4.0, 4.0]);
    }

    #[test]
    fn dense_examples() {
        let y = dense_forward(&[-1.0, 2.0], &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], Activation::Relu).unwrap();
        assert_eq!(y, vec![0.0, 2.0]);
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let s = softmax(&[1f64.ln(), 3f64.ln()]);
        assert!((s[0] - 0.25).abs() < 1e-15 && (s[1] - 0.75).abs() < 1e-15);
        assert!(dense_forward(&[1.0], &[1.0, 2.0], &[0.0], Activation::Linear).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[1.0, 2.0, -3.0]);
        let b = softmax(&[1001.0, 1002.0, 997.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = SeedStream::new(1).rng();
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.9, Mode::Eval, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = SeedStream::new(7).rng();
        let x = [1.0, -0.5, 2.0];
        let draws = 10_000;
        let mut sum = [0.0; 3];
        for _ in 0..draws {
            let (y, _) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
            for i in 0..3 {
                sum[i] += y[i];
            }
        }
        for i in 0..3 {
            let mean = sum[i] / draws as f64;
            assert!(((mean - x[i]) / x[i]).abs() < 0.02, "{mean} vs {}", x[i]);
        }
    }

    #[test]
    fn embed_rejects_out_of_range() {
        assert!(embed(&[0.0; 4], 2, &[2]).is_err());
        let t = embed(&[1.0, 2.0, 3.0, 4.0], 2, &[1, 0]).unwrap();
        assert_eq!(t.data(), &[3.0, 4.0, 1.0, 2.0]);
    }
}
