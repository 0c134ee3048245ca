//! Minibatch Adam training with per-epoch validation and best-epoch selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::balance::{epoch_plan, BalanceMode};
use super::metrics::{binary_metrics, clpsych_metrics};
use crate::corpus::{RiskLabel, UserLabel};
use crate::error::{Error, Result};
use crate::models::{DepressionModel, RiskInput, RiskModel, RiskVariant};
use crate::nn::{adam_step, softmax_cross_entropy, AdamConfig, AdamState, GradStore, Mode, ParamStore};
use crate::seed::{Rng, SeedStream};

/// A model the generic training loop can drive.
pub trait Trainable: Sync {
    type Input: Sync;
    type Label: Copy + PartialEq + Send + Sync;

    fn classes(&self) -> usize;
    fn label_index(label: Self::Label) -> usize;
    fn default_balance(&self) -> BalanceMode;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn loss_and_grads(&self, x: &Self::Input, y: Self::Label, weight: f64, rng: &mut Rng) -> Result<(f64, GradStore)>;
    /// Unweighted evaluation-mode loss.
    fn eval_loss(&self, x: &Self::Input, y: Self::Label, rng: &mut Rng) -> Result<f64>;
    fn predict(&self, x: &Self::Input) -> Result<Self::Label>;
    /// Higher is better; drives best-epoch selection.
    fn selection_score(gold: &[Self::Label], pred: &[Self::Label]) -> Result<f64>;
    fn metrics_json(gold: &[Self::Label], pred: &[Self::Label]) -> Result<serde_json::Value>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Falls back to the model's own default when absent.
    pub balance: Option<BalanceMode>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
            balance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub metrics: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_score: Option<f64>,
    pub logs: Vec<EpochLog>,
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged {
            epoch,
            batch,
            loss: f64::NAN,
        },
        e => e,
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("metrics serialize")
}

/// Predictions and mean evaluation loss over `data`.
pub fn evaluate<M: Trainable>(model: &M, data: &[(M::Input, M::Label)], seeds: &SeedStream) -> Result<(Vec<M::Label>, f64)> {
    let out: Vec<(M::Label, f64)> = data
        .par_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            let mut rng = seeds.index(i as u64).rng();
            Ok((model.predict(x)?, model.eval_loss(x, *y, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let loss = out.iter().map(|o| o.1).sum::<f64>() / out.len().max(1) as f64;
    Ok((out.into_iter().map(|o| o.0).collect(), loss))
}

/// Trains in place and leaves the best validation epoch's weights in `model`.
/// Without validation data the last epoch is kept. `on_epoch` sees every
/// log line as it is produced.
pub fn train<M: Trainable>(
    model: &mut M,
    train_data: &[(M::Input, M::Label)],
    validation: &[(M::Input, M::Label)],
    cfg: &TrainConfig,
    seeds: &SeedStream,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let mut outcome = TrainOutcome {
        best_epoch: 0,
        best_score: None,
        logs: Vec::new(),
    };
    if cfg.epochs == 0 {
        return Ok(outcome);
    }
    if train_data.is_empty() {
        return Err(Error::Data("no training instances".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let seeds = seeds.child("train");
    let mode = cfg.balance.unwrap_or_else(|| model.default_balance());
    let labels: Vec<usize> = train_data.iter().map(|(_, y)| M::label_index(*y)).collect();
    let classes = model.classes();
    let mut state = AdamState::new(model.params(), cfg.adam);
    let mut best: Option<ParamStore> = None;
    let gold_val: Vec<M::Label> = validation.iter().map(|(_, y)| *y).collect();

    for epoch in 1..=cfg.epochs {
        let plan = epoch_plan(&labels, classes, mode, &mut seeds.child("plan").index(epoch as u64).rng())?;
        let step_seeds = seeds.child("step").index(epoch as u64);
        let mut total = 0.0;
        for (b, chunk) in plan.chunks(cfg.batch_size).enumerate() {
            let m: &M = model;
            let results: Vec<(f64, GradStore)> = chunk
                .par_iter()
                .enumerate()
                .map(|(j, &(i, w))| {
                    let mut rng = step_seeds.index((b * cfg.batch_size + j) as u64).rng();
                    let (x, y) = &train_data[i];
                    m.loss_and_grads(x, *y, w, &mut rng)
                })
                .collect::<Result<_>>()
                .map_err(|e| diverged(e, epoch, b))?;
            let mut grads = GradStore::zeros_like(model.params());
            let mut batch_loss = 0.0;
            for (l, g) in &results {
                batch_loss += l;
                grads.add_assign(g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
            total += batch_loss;
            grads.scale(1.0 / chunk.len() as f64);
            adam_step(model.params_mut(), &grads, &mut state).map_err(|e| diverged(e, epoch, b))?;
        }
        model.params().ensure_finite().map_err(|_| Error::Diverged {
            epoch,
            batch: plan.len().div_ceil(cfg.batch_size),
            loss: f64::NAN,
        })?;
        let log = EpochLog {
            epoch,
            split: "train".into(),
            loss: total / plan.len() as f64,
            metrics: serde_json::Value::Null,
        };
        on_epoch(&log);
        outcome.logs.push(log);

        if validation.is_empty() {
            outcome.best_epoch = epoch;
            continue;
        }
        let (pred, loss) = evaluate(model, validation, &seeds.child("validation"))?;
        let score = M::selection_score(&gold_val, &pred)?;
        let log = EpochLog {
            epoch,
            split: "validation".into(),
            loss,
            metrics: M::metrics_json(&gold_val, &pred)?,
        };
        on_epoch(&log);
        outcome.logs.push(log);
        if outcome.best_score.is_none_or(|s| score > s) {
            outcome.best_score = Some(score);
            outcome.best_epoch = epoch;
            best = Some(model.params().clone());
        }
    }
    if let Some(p) = best {
        *model.params_mut() = p;
    }
    Ok(outcome)
}

impl Trainable for DepressionModel {
    type Input = Vec<Vec<u32>>;
    type Label = UserLabel;

    fn classes(&self) -> usize {
        2
    }

    fn label_index(label: UserLabel) -> usize {
        label.index()
    }

    fn default_balance(&self) -> BalanceMode {
        BalanceMode::Sampled
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn loss_and_grads(&self, x: &Self::Input, y: UserLabel, weight: f64, rng: &mut Rng) -> Result<(f64, GradStore)> {
        DepressionModel::loss_and_grads(self, x, y, weight, rng)
    }

    fn eval_loss(&self, x: &Self::Input, y: UserLabel, rng: &mut Rng) -> Result<f64> {
        let fwd = self.forward(x, Mode::Eval, rng, false)?;
        Ok(softmax_cross_entropy(&fwd.logits, y.index(), 1.0)?.0)
    }

    fn predict(&self, x: &Self::Input) -> Result<UserLabel> {
        let p = self.classify_tokens(x)?;
        Ok(if p[1] > p[0] { UserLabel::Diagnosed } else { UserLabel::Control })
    }

    fn selection_score(gold: &[UserLabel], pred: &[UserLabel]) -> Result<f64> {
        Ok(binary_metrics(gold, pred, &UserLabel::Diagnosed)?.f1)
    }

    fn metrics_json(gold: &[UserLabel], pred: &[UserLabel]) -> Result<serde_json::Value> {
        Ok(to_json(&binary_metrics(gold, pred, &UserLabel::Diagnosed)?))
    }
}

impl Trainable for RiskModel {
    type Input = RiskInput;
    type Label = RiskLabel;

    fn classes(&self) -> usize {
        RiskLabel::COUNT
    }

    fn label_index(label: RiskLabel) -> usize {
        label.index()
    }

    fn default_balance(&self) -> BalanceMode {
        match self.variant() {
            RiskVariant::CatCe => BalanceMode::Weighted,
            _ => BalanceMode::Sampled,
        }
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn loss_and_grads(&self, x: &RiskInput, y: RiskLabel, weight: f64, rng: &mut Rng) -> Result<(f64, GradStore)> {
        RiskModel::loss_and_grads(self, x, y, weight, rng)
    }

    fn eval_loss(&self, x: &RiskInput, y: RiskLabel, rng: &mut Rng) -> Result<f64> {
        let fwd = self.forward(x, Mode::Eval, rng, false)?;
        let mut scratch = GradStore::default();
        if self.variant().is_metric() {
            scratch = GradStore::zeros_like(&self.params);
        }
        Ok(self.head_loss(&fwd, y, 1.0, rng, &mut scratch)?.0)
    }

    fn predict(&self, x: &RiskInput) -> Result<RiskLabel> {
        RiskModel::predict(self, x)
    }

    fn selection_score(gold: &[RiskLabel], pred: &[RiskLabel]) -> Result<f64> {
        Ok(clpsych_metrics(gold, pred)?.non_green_f1)
    }

    fn metrics_json(gold: &[RiskLabel], pred: &[RiskLabel]) -> Result<serde_json::Value> {
        Ok(to_json(&clpsych_metrics(gold, pred)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::models::DepressionConfig;
    use crate::nn::{ConvSpec, PoolKind};

    fn tiny_model() -> DepressionModel {
        let vocab = Vocabulary::from_tokens(["good", "bad", "x", "y", "z"]).unwrap();
        let cfg = DepressionConfig {
            embed_dim: 6,
            post_conv: ConvSpec::new(2, 4, 1, PoolKind::AvgAll, 1).unwrap(),
            merge_conv: ConvSpec::new(3, 4, 3, PoolKind::AvgAll, 1).unwrap(),
            dense: vec![5],
            dropout: 0.0,
        };
        DepressionModel::new(cfg, vocab, SeedStream::new(1)).unwrap()
    }

    fn data(n: usize, seed: u64) -> Vec<(Vec<Vec<u32>>, UserLabel)> {
        use rand::Rng as _;
        let mut rng = SeedStream::new(seed).rng();
        (0..n)
            .map(|i| {
                let label = UserLabel::from_index(i % 2).unwrap();
                let posts = (0..4)
                    .map(|_| {
                        let mut p: Vec<u32> = (0..5).map(|_| rng.gen_range(4..7)).collect();
                        if label == UserLabel::Diagnosed {
                            p[rng.gen_range(0..4)] = 3;
                        } else {
                            p[rng.gen_range(0..4)] = 2;
                        }
                        p
                    })
                    .collect();
                (posts, label)
            })
            .collect()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            adam: AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            balance: None,
        }
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let mut m = tiny_model();
        let before = m.params.clone();
        let out = train(&mut m, &data(8, 1), &data(4, 2), &cfg(0), &SeedStream::new(0), |_| {}).unwrap();
        assert_eq!(m.params, before);
        assert_eq!(out.best_epoch, 0);
        assert!(out.logs.is_empty());
    }

    #[test]
    fn same_seed_same_logs() {
        let run = || {
            let mut m = tiny_model();
            let out = train(&mut m, &data(24, 1), &data(8, 2), &cfg(3), &SeedStream::new(5), |_| {}).unwrap();
            (serde_json::to_string(&out).unwrap(), m.params)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let mut m = tiny_model();
        let out = train(&mut m, &data(40, 1), &data(20, 2), &cfg(5), &SeedStream::new(5), |_| {}).unwrap();
        let losses: Vec<f64> = out.logs.iter().filter(|l| l.split == "train").map(|l| l.loss).collect();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        assert!(out.best_score.unwrap() > 0.9);
    }

    #[test]
    fn nan_weights_diverge() {
        let mut m = tiny_model();
        m.params.get_mut("output.weight")[0] = f64::NAN;
        let err = train(&mut m, &data(8, 1), &[], &cfg(1), &SeedStream::new(0), |_| {}).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, batch: 0, .. }), "{err}");
    }

    #[test]
    fn best_epoch_weights_kept() {
        let mut m = tiny_model();
        let val = data(10, 3);
        let out = train(&mut m, &data(30, 1), &val, &cfg(4), &SeedStream::new(5), |_| {}).unwrap();
        let (pred, _) = evaluate(&m, &val, &SeedStream::new(0)).unwrap();
        let gold: Vec<UserLabel> = val.iter().map(|v| v.1).collect();
        let score = DepressionModel::selection_score(&gold, &pred).unwrap();
        assert_eq!(Some(score), out.best_score);
    }
}
