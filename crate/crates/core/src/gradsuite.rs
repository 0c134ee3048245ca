//! Finite-difference verification of every layer, both metric losses and the
//! assembled task models.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{RiskLabel, UserLabel, Vocabulary};
use crate::error::Result;
use crate::models::{metric_hinge, ordinal_margin, DepressionConfig, DepressionModel, RiskConfig, RiskInput, RiskModel, RiskVariant};
use crate::nn::gradcheck::{central_difference, max_relative_error};
use crate::nn::*;
use crate::seed::{Rng, SeedStream};

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Pre-activations, pooling gaps and hinge values closer than this to a
/// kink make a random configuration be redrawn.
const KINK_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub name: String,
    pub configs: usize,
    /// Draws rejected for lying near a non-differentiable point.
    pub resampled: usize,
    /// Model coordinates whose one-sided differences disagree (a kink inside ±ε).
    pub skipped: usize,
    pub max_rel_error: f64,
}

impl GradRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn rand_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn weighted_sum(r: &[f64], v: &[f64]) -> f64 {
    r.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// One sampled configuration: `None` asks for a redraw, otherwise the
/// analytic gradient and the scalar function at the sampled point.
type Draw = Option<(Vec<f64>, Vec<f64>, Box<dyn Fn(&[f64]) -> f64>)>;

fn run_check(name: &str, configs: usize, seeds: &SeedStream, mut draw: impl FnMut(&mut Rng) -> Draw) -> GradRow {
    let mut row = GradRow {
        name: name.to_string(),
        configs,
        resampled: 0,
        skipped: 0,
        max_rel_error: 0.0,
    };
    let stream = seeds.child(name);
    let mut attempt = 0u64;
    let mut done = 0;
    while done < configs {
        let mut rng = stream.index(attempt).rng();
        attempt += 1;
        let Some((x, analytic, f)) = draw(&mut rng) else {
            row.resampled += 1;
            continue;
        };
        let numeric = central_difference(|p| f(p), &x, EPS);
        row.max_rel_error = row.max_rel_error.max(max_relative_error(&analytic, &numeric));
        done += 1;
    }
    row
}

fn conv_check(rng: &mut Rng) -> Draw {
    let k = rng.gen_range(1..=4);
    let d = rng.gen_range(1..=4);
    let l = rng.gen_range(1..=4);
    let stride = rng.gen_range(1..=3);
    let t = k + rng.gen_range(0..=6);
    let spec = ConvSpec::new(k, l, stride, PoolKind::None, 1).ok()?;
    let n_in = t * d;
    let n_w = spec.weight_len(d);
    let x = rand_vec(rng, n_in + n_w + l, 1.0);
    let r = rand_vec(rng, spec.out_len(t) * l, 1.0);
    let input = Tensor2::new(t, d, x[..n_in].to_vec()).ok()?;
    let mut gw = vec![0.0; n_w];
    let mut gb = vec![0.0; l];
    let g_out = Tensor2::new(spec.out_len(t), l, r.clone()).ok()?;
    let gi = conv1d_backward(&input, &spec, &x[n_in..n_in + n_w], &g_out, &mut gw, &mut gb, true).ok()??;
    let mut analytic = gi.into_data();
    analytic.extend(gw);
    analytic.extend(gb);
    let f = move |p: &[f64]| {
        let input = Tensor2::new(t, d, p[..n_in].to_vec()).expect("shape");
        let out = conv1d_forward(&input, &spec, &p[n_in..n_in + n_w], &p[n_in + n_w..]).expect("conv");
        weighted_sum(&r, out.data())
    };
    Some((x, analytic, Box::new(f)))
}

fn relu_check(rng: &mut Rng) -> Draw {
    let n = rng.gen_range(1..=12);
    let x = rand_vec(rng, n, 1.0);
    if x.iter().any(|v| v.abs() < KINK_GAP) {
        return None;
    }
    let r = rand_vec(rng, n, 1.0);
    let mut act = x.clone();
    relu_inplace(&mut act);
    let mut g = r.clone();
    relu_backward_inplace(&act, &mut g);
    let f = move |p: &[f64]| {
        let mut a = p.to_vec();
        relu_inplace(&mut a);
        weighted_sum(&r, &a)
    };
    Some((x, g, Box::new(f)))
}

fn max_pool_check(rng: &mut Rng) -> Draw {
    let rows = rng.gen_range(1..=9);
    let cols = rng.gen_range(1..=4);
    let n = rng.gen_range(1..=4);
    let x = rand_vec(rng, rows * cols, 1.0);
    let feats = Tensor2::new(rows, cols, x.clone()).ok()?;
    for b in 0..rows.div_ceil(n) {
        for c in 0..cols {
            let mut vals: Vec<f64> = (b * n..((b + 1) * n).min(rows)).map(|r| feats.get(r, c)).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            if vals.len() > 1 && vals[0] - vals[1] < KINK_GAP {
                return None;
            }
        }
    }
    let (out, arg) = max_pool(&feats, n).ok()?;
    let r = rand_vec(rng, out.data().len(), 1.0);
    let g = max_pool_backward(rows, &arg, &Tensor2::new(out.rows(), cols, r.clone()).ok()?);
    let f = move |p: &[f64]| {
        let t = Tensor2::new(rows, cols, p.to_vec()).expect("shape");
        weighted_sum(&r, max_pool(&t, n).expect("pool").0.data())
    };
    Some((x, g.into_data(), Box::new(f)))
}

fn avg_pool_check(rng: &mut Rng) -> Draw {
    let rows = rng.gen_range(1..=9);
    let cols = rng.gen_range(1..=4);
    let x = rand_vec(rng, rows * cols, 1.0);
    let r = rand_vec(rng, cols, 1.0);
    let g = avg_pool_all_backward(rows, &r);
    let f = move |p: &[f64]| {
        let t = Tensor2::new(rows, cols, p.to_vec()).expect("shape");
        weighted_sum(&r, &avg_pool_all(&t).expect("pool"))
    };
    Some((x, g.into_data(), Box::new(f)))
}

fn dense_check(rng: &mut Rng) -> Draw {
    let n_in = rng.gen_range(1..=6);
    let n_out = rng.gen_range(1..=6);
    let act = [Activation::Relu, Activation::Linear, Activation::Softmax][rng.gen_range(0..3)];
    let n_w = n_in * n_out;
    let x = rand_vec(rng, n_in + n_w + n_out, 1.0);
    let r = rand_vec(rng, n_out, 1.0);
    let (xi, w, b) = (&x[..n_in], &x[n_in..n_in + n_w], &x[n_in + n_w..]);
    let z = affine(xi, w, b).ok()?;
    let grad_pre = match act {
        Activation::Relu => {
            if z.iter().any(|v| v.abs() < KINK_GAP) {
                return None;
            }
            let mut g = r.clone();
            relu_backward_inplace(&z, &mut g);
            g
        }
        Activation::Linear => r.clone(),
        Activation::Softmax => softmax_backward(&softmax(&z), &r),
    };
    let mut gw = vec![0.0; n_w];
    let mut gb = vec![0.0; n_out];
    let mut analytic = affine_backward(xi, w, &grad_pre, &mut gw, &mut gb);
    analytic.extend(gw);
    analytic.extend(gb);
    let f = move |p: &[f64]| {
        let y = dense_forward(&p[..n_in], &p[n_in..n_in + n_w], &p[n_in + n_w..], act).expect("dense");
        weighted_sum(&r, &y)
    };
    Some((x, analytic, Box::new(f)))
}

fn softmax_check(rng: &mut Rng) -> Draw {
    let n = rng.gen_range(1..=8);
    let x = rand_vec(rng, n, 3.0);
    let r = rand_vec(rng, n, 1.0);
    let g = softmax_backward(&softmax(&x), &r);
    Some((x, g, Box::new(move |p: &[f64]| weighted_sum(&r, &softmax(p)))))
}

fn dropout_check(rng: &mut Rng) -> Draw {
    let n = rng.gen_range(1..=12);
    let rate = rng.gen_range(0.0..0.9);
    let mask_seed = rng.gen::<u64>();
    let x = rand_vec(rng, n, 1.0);
    let r = rand_vec(rng, n, 1.0);
    let (_, mask) = dropout(&x, rate, Mode::Train, &mut SeedStream::new(mask_seed).rng()).ok()?;
    let g = r.iter().zip(&mask).map(|(a, m)| a * m).collect();
    let f = move |p: &[f64]| {
        let (y, _) = dropout(p, rate, Mode::Train, &mut SeedStream::new(mask_seed).rng()).expect("dropout");
        weighted_sum(&r, &y)
    };
    Some((x, g, Box::new(f)))
}

fn embedding_check(rng: &mut Rng) -> Draw {
    let vocab = rng.gen_range(2..=8);
    let dim = rng.gen_range(1..=4);
    let ids: Vec<u32> = (0..rng.gen_range(1..=6)).map(|_| rng.gen_range(0..vocab) as u32).collect();
    let x = rand_vec(rng, vocab * dim, 1.0);
    let r = rand_vec(rng, ids.len() * dim, 1.0);
    let mut g = vec![0.0; x.len()];
    embed_backward(&mut g, dim, &ids, &Tensor2::new(ids.len(), dim, r.clone()).ok()?);
    let f = move |p: &[f64]| weighted_sum(&r, embed(p, dim, &ids).expect("ids in range").data());
    Some((x, g, Box::new(f)))
}

fn cross_entropy_check(rng: &mut Rng) -> Draw {
    let n = rng.gen_range(2..=6);
    let target = rng.gen_range(0..n);
    let w = rng.gen_range(0.1..3.0);
    let x = rand_vec(rng, n, 3.0);
    let (_, _, g) = softmax_cross_entropy(&x, target, w).ok()?;
    Some((x, g, Box::new(move |p: &[f64]| softmax_cross_entropy(p, target, w).expect("target").0)))
}

fn squared_error_check(rng: &mut Rng) -> Draw {
    let t = rng.gen_range(0..4) as f64;
    let w = rng.gen_range(0.1..3.0);
    let x = vec![rng.gen_range(-1.0..4.0)];
    let (_, g) = squared_error(x[0], t, w);
    Some((x, vec![g], Box::new(move |p: &[f64]| squared_error(p[0], t, w).0)))
}

fn metric_check(rng: &mut Rng, ordinal: bool) -> Draw {
    let d = rng.gen_range(1..=6);
    let p = rng.gen_range(0..RiskLabel::COUNT);
    let n = (p + rng.gen_range(1..RiskLabel::COUNT)) % RiskLabel::COUNT;
    let alpha = rng.gen_range(0.0..2.0);
    let margin = if ordinal { ordinal_margin(p, n, alpha) } else { alpha };
    let x = rand_vec(rng, d + RiskLabel::COUNT * d, 1.5);
    let classes = Tensor2::new(RiskLabel::COUNT, d, x[d..].to_vec()).ok()?;
    let dist = |c: usize| {
        x[..d]
            .iter()
            .zip(classes.row(c))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let (dp, dn) = (dist(p), dist(n));
    if (dp - dn + margin).abs() < KINK_GAP || dp < KINK_GAP || dn < KINK_GAP {
        return None;
    }
    let m = metric_hinge(&x[..d], &classes, p, n, margin).ok()?;
    let mut g = vec![0.0; x.len()];
    g[..d].copy_from_slice(&m.grad_x);
    g[d + p * d..d + (p + 1) * d].copy_from_slice(&m.grad_positive);
    g[d + n * d..d + (n + 1) * d].copy_from_slice(&m.grad_negative);
    let f = move |q: &[f64]| {
        let c = Tensor2::new(RiskLabel::COUNT, d, q[d..].to_vec()).expect("shape");
        metric_hinge(&q[..d], &c, p, n, margin).expect("valid classes").loss
    };
    Some((x, g, Box::new(f)))
}

fn flatten(params: &ParamStore) -> Vec<f64> {
    params.iter().flat_map(|(_, p)| p.values.clone()).collect()
}

fn unflatten(params: &mut ParamStore, flat: &[f64]) {
    let mut at = 0;
    for (_, p) in params.iter_mut() {
        let n = p.values.len();
        p.values.copy_from_slice(&flat[at..at + n]);
        at += n;
    }
}

fn randomize(params: &mut ParamStore, rng: &mut Rng) {
    for (_, p) in params.iter_mut() {
        p.values.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
}

/// Central differences over every model weight, skipping coordinates whose
/// one-sided slopes disagree (a ReLU or max-pool switch inside ±ε).
fn model_errors(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> (f64, usize) {
    let f0 = f(x);
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for i in 0..x.len() {
        probe[i] = x[i] + EPS;
        let up = f(&probe);
        probe[i] = x[i] - EPS;
        let down = f(&probe);
        probe[i] = x[i];
        let (dp, dm) = ((up - f0) / EPS, (f0 - down) / EPS);
        if (dp - dm).abs() > KINK_GAP * dp.abs().max(dm.abs()).max(1.0) {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * EPS);
        worst = worst.max(crate::nn::gradcheck::relative_error(analytic[i], numeric));
    }
    (worst, skipped)
}

fn depression_row(configs: usize, seeds: &SeedStream) -> Result<GradRow> {
    let mut row = GradRow {
        name: "depression model".into(),
        configs,
        resampled: 0,
        skipped: 0,
        max_rel_error: 0.0,
    };
    let vocab = Vocabulary::from_tokens(["a", "b", "c", "d"])?;
    for c in 0..configs {
        let mut rng = seeds.child("depression model").index(c as u64).rng();
        let cfg = DepressionConfig {
            embed_dim: 3,
            post_conv: ConvSpec::new(rng.gen_range(1..=3), 2, 1, PoolKind::AvgAll, 1)?,
            merge_conv: ConvSpec::new(rng.gen_range(1..=4), 2, rng.gen_range(1..=3), PoolKind::AvgAll, 1)?,
            dense: vec![3],
            dropout: 0.3,
        };
        let mut model = DepressionModel::new(cfg, vocab.clone(), SeedStream::new(c as u64))?;
        randomize(&mut model.params, &mut rng);
        let posts: Vec<Vec<u32>> = (0..rng.gen_range(1..=6))
            .map(|_| (0..rng.gen_range(0..=6)).map(|_| rng.gen_range(0..6)).collect())
            .collect();
        let label = UserLabel::from_index(rng.gen_range(0..2)).expect("binary");
        let weight = rng.gen_range(0.5..2.0);
        let step_seed = rng.gen::<u64>();
        let (_, grads) = model.loss_and_grads(&posts, label, weight, &mut SeedStream::new(step_seed).rng())?;
        let analytic: Vec<f64> = grads.iter().flat_map(|(_, g)| g.to_vec()).collect();
        let x = flatten(&model.params);
        let f = |p: &[f64]| {
            let mut m = model.clone();
            unflatten(&mut m.params, p);
            m.loss_and_grads(&posts, label, weight, &mut SeedStream::new(step_seed).rng())
                .expect("valid input")
                .0
        };
        let (err, skipped) = model_errors(f, &x, &analytic);
        row.max_rel_error = row.max_rel_error.max(err);
        row.skipped += skipped;
    }
    Ok(row)
}

fn risk_row(variant: RiskVariant, configs: usize, seeds: &SeedStream) -> Result<GradRow> {
    let name = format!("risk model ({variant})");
    let mut row = GradRow {
        name: name.clone(),
        configs,
        resampled: 0,
        skipped: 0,
        max_rel_error: 0.0,
    };
    for c in 0..configs {
        let mut rng = seeds.child(&name).index(c as u64).rng();
        let cfg = RiskConfig {
            conv: ConvSpec::new(rng.gen_range(1..=3), 2, 1, PoolKind::Max, rng.gen_range(1..=3))?,
            dense: vec![4],
            max_sentences: 5,
            metric_dim: Some(3),
            dropout: 0.3,
            ..RiskConfig::for_variant(variant, 3)
        };
        let mut model = RiskModel::new(cfg, SeedStream::new(c as u64))?;
        randomize(&mut model.params, &mut rng);
        let mut sentences = |n: usize| Tensor2::new(n, 3, rand_vec(&mut rng, n * 3, 1.0));
        let input = RiskInput {
            target: sentences(1 + c % 5)?,
            context: sentences(c % 6)?,
        };
        let label = RiskLabel::from_index(rng.gen_range(0..RiskLabel::COUNT)).expect("four labels");
        let weight = rng.gen_range(0.5..2.0);
        let step_seed = rng.gen::<u64>();
        let (_, grads) = model.loss_and_grads(&input, label, weight, &mut SeedStream::new(step_seed).rng())?;
        let analytic: Vec<f64> = grads.iter().flat_map(|(_, g)| g.to_vec()).collect();
        let x = flatten(&model.params);
        let f = |p: &[f64]| {
            let mut m = model.clone();
            unflatten(&mut m.params, p);
            m.loss_and_grads(&input, label, weight, &mut SeedStream::new(step_seed).rng())
                .expect("valid input")
                .0
        };
        let (err, skipped) = model_errors(f, &x, &analytic);
        row.max_rel_error = row.max_rel_error.max(err);
        row.skipped += skipped;
    }
    Ok(row)
}

/// Layer and loss checks over `configs` random configurations each.
pub fn layer_suite(seed: u64, configs: usize) -> Vec<GradRow> {
    let seeds = SeedStream::new(seed).child("gradcheck");
    vec![
        run_check("conv1d", configs, &seeds, conv_check),
        run_check("relu", configs, &seeds, relu_check),
        run_check("max_pool", configs, &seeds, max_pool_check),
        run_check("avg_pool_all", configs, &seeds, avg_pool_check),
        run_check("dense", configs, &seeds, dense_check),
        run_check("softmax", configs, &seeds, softmax_check),
        run_check("dropout", configs, &seeds, dropout_check),
        run_check("embedding", configs, &seeds, embedding_check),
        run_check("softmax_cross_entropy", configs, &seeds, cross_entropy_check),
        run_check("squared_error", configs, &seeds, squared_error_check),
        run_check("class_metric", configs, &seeds, |r| metric_check(r, false)),
        run_check("class_metric_ordinal", configs, &seeds, |r| metric_check(r, true)),
    ]
}

/// End-to-end checks of the assembled models.
pub fn model_suite(seed: u64, configs: usize, depression: bool, risk: bool) -> Result<Vec<GradRow>> {
    let seeds = SeedStream::new(seed).child("gradcheck");
    let mut rows = Vec::new();
    if depression {
        rows.push(depression_row(configs, &seeds)?);
    }
    if risk {
        for v in RiskVariant::ALL {
            rows.push(risk_row(v, configs, &seeds)?);
        }
    }
    Ok(rows)
}

pub fn render(rows: &[GradRow]) -> String {
    let mut s = format!(
        "{:<34} {:>7} {:>9} {:>7} {:>13}  result\n",
        "check", "configs", "redrawn", "skipped", "max rel err"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<34} {:>7} {:>9} {:>7} {:>13.3e}  {}\n",
            r.name,
            r.configs,
            r.resampled,
            r.skipped,
            r.max_rel_error,
            if r.passed() { "pass" } else { "FAIL" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layers_pass() {
        for row in layer_suite(11, 20) {
            assert!(row.passed(), "{row:?}");
        }
    }

    #[test]
    fn models_pass() {
        for row in model_suite(11, 5, true, true).unwrap() {
            assert!(row.passed(), "{row:?}");
        }
    }

    #[test]
    fn broken_gradient_is_caught() {
        let seeds = SeedStream::new(0);
        let row = run_check("broken", 5, &seeds, |rng| {
            let x = rand_vec(rng, 3, 1.0);
            let g = x.iter().map(|v| 2.0 * v * 1.01).collect();
            Some((x, g, Box::new(|p: &[f64]| p.iter().map(|v| v * v).sum::<f64>())))
        });
        assert!(!row.passed());
    }
}
