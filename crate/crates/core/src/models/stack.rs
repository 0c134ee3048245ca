//! Dense ReLU layers with dropout, shared by both task models.

use rand::Rng;

use crate::error::Result;
use crate::nn::{affine, axpy, dropout, glorot_uniform, relu_backward_inplace, relu_inplace, GradStore, Mode, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseTrace {
    input: Vec<f64>,
    activation: Vec<f64>,
    mask: Vec<f64>,
}

pub(crate) fn weight_name(prefix: &str) -> String {
    format!("{prefix}.weight")
}

pub(crate) fn bias_name(prefix: &str) -> String {
    format!("{prefix}.bias")
}

pub(crate) fn dense_name(i: usize) -> String {
    format!("dense{i}")
}

/// Registers a glorot-initialized `[out × in]` layer with zero bias.
pub(crate) fn init_affine<R: Rng>(params: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut R) -> Result<()> {
    params.insert(weight_name(prefix), &[output, input], glorot_uniform(rng, input, output, input * output))?;
    params.insert(bias_name(prefix), &[output], vec![0.0; output])
}

pub(crate) fn init_stack<R: Rng>(params: &mut ParamStore, input: usize, widths: &[usize], rng: &mut R) -> Result<usize> {
    let mut width = input;
    for (i, &w) in widths.iter().enumerate() {
        init_affine(params, &dense_name(i), width, w, rng)?;
        width = w;
    }
    Ok(width)
}

pub(crate) fn affine_layer(params: &ParamStore, prefix: &str, x: &[f64]) -> Result<Vec<f64>> {
    affine(x, params.get(&weight_name(prefix)), params.get(&bias_name(prefix)))
}

/// Backward through a named affine layer; accumulates into `grads`, returns `∂/∂x`.
pub(crate) fn affine_layer_backward(params: &ParamStore, prefix: &str, x: &[f64], grad_pre: &[f64], grads: &mut GradStore) -> Vec<f64> {
    let w = weight_name(prefix);
    let b = bias_name(prefix);
    for (gb, g) in grads.get_mut(&b).iter_mut().zip(grad_pre) {
        *gb += g;
    }
    let n = x.len();
    let gw = grads.get_mut(&w);
    let weights = params.get(&w);
    let mut gx = vec![0.0; n];
    for (o, &g) in grad_pre.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        axpy(g, x, &mut gw[o * n..(o + 1) * n]);
        axpy(g, &weights[o * n..(o + 1) * n], &mut gx);
    }
    gx
}

pub(crate) fn stack_forward<R: Rng>(
    params: &ParamStore,
    layers: usize,
    x: Vec<f64>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<DenseTrace>)> {
    let mut h = x;
    let mut traces = Vec::with_capacity(layers);
    for i in 0..layers {
        let mut z = affine_layer(params, &dense_name(i), &h)?;
        relu_inplace(&mut z);
        let (out, mask) = dropout(&z, rate, mode, rng)?;
        traces.push(DenseTrace {
            input: std::mem::replace(&mut h, out),
            activation: z,
            mask,
        });
    }
    Ok((h, traces))
}

pub(crate) fn stack_backward(params: &ParamStore, traces: &[DenseTrace], grad_out: Vec<f64>, grads: &mut GradStore) -> Vec<f64> {
    let mut g = grad_out;
    for (i, t) in traces.iter().enumerate().rev() {
        for (gi, m) in g.iter_mut().zip(&t.mask) {
            *gi *= m;
        }
        relu_backward_inplace(&t.activation, &mut g);
        g = affine_layer_backward(params, &dense_name(i), &t.input, &g, grads);
    }
    g
}
