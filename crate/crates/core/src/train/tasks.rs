//! End-to-end training and prediction for the two tasks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::split::{ensure_disjoint, stratified_holdout};
use super::trainer::{train, EpochLog, TrainConfig, TrainOutcome};
use super::{select_post_indices, SelectionConfig};
use crate::corpus::{Abbreviations, RiskLabel, SentenceEncoder, ThreadInstance, UserLabel, UserRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{DepressionConfig, DepressionModel, RiskConfig, RiskInput, RiskModel, RiskVariant};
use crate::nn::Mode;
use crate::seed::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepressionTask {
    pub model: DepressionConfig,
    pub selection: SelectionConfig,
    pub train: TrainConfig,
    /// Words seen fewer times in the selected training posts map to the unknown id.
    pub min_freq: usize,
}

impl Default for DepressionTask {
    fn default() -> Self {
        Self {
            model: DepressionConfig::default(),
            selection: SelectionConfig::default(),
            train: TrainConfig::default(),
            min_freq: 5,
        }
    }
}

pub fn depression_examples(model: &DepressionModel, users: &[UserRecord], selection: &SelectionConfig) -> Result<Vec<(Vec<Vec<u32>>, UserLabel)>> {
    users
        .par_iter()
        .map(|u| {
            let posts = model.prepare_user(u, selection);
            if posts.is_empty() {
                return Err(Error::Data(format!("user {} has no posts", u.user_id)));
            }
            Ok((posts, u.label))
        })
        .collect()
}

pub fn train_depression(
    train_users: &[UserRecord],
    validation: &[UserRecord],
    task: &DepressionTask,
    seeds: &SeedStream,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(DepressionModel, TrainOutcome)> {
    task.selection.validate()?;
    ensure_disjoint(&[
        ("train", train_users.iter().map(|u| u.user_id.as_str()).collect()),
        ("validation", validation.iter().map(|u| u.user_id.as_str()).collect()),
    ])?;
    let texts: Vec<&str> = train_users
        .iter()
        .flat_map(|u| select_post_indices(u, &task.selection).into_iter().map(|i| u.posts[i].text.as_str()))
        .collect();
    let vocab = Vocabulary::build(texts, task.min_freq);
    let mut model = DepressionModel::new(task.model.clone(), vocab, seeds.clone())?;
    let train_data = depression_examples(&model, train_users, &task.selection)?;
    let val_data = depression_examples(&model, validation, &task.selection)?;
    let outcome = train(&mut model, &train_data, &val_data, &task.train, seeds, on_epoch)?;
    Ok((model, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrediction {
    pub user_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<UserLabel>,
    pub pred: UserLabel,
    pub p_diagnosed: f64,
}

pub fn predict_users(model: &DepressionModel, users: &[UserRecord], selection: &SelectionConfig, with_gold: bool) -> Result<Vec<UserPrediction>> {
    users
        .par_iter()
        .map(|u| {
            let p = model.classify_user(u, selection)?;
            Ok(UserPrediction {
                user_id: u.user_id.clone(),
                gold: with_gold.then_some(u.label),
                pred: if p[1] > p[0] { UserLabel::Diagnosed } else { UserLabel::Control },
                p_diagnosed: p[1],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTask {
    pub model: RiskConfig,
    pub train: TrainConfig,
    /// Share of the training threads held out for validation when no
    /// validation file is given.
    pub validation_fraction: f64,
}

impl RiskTask {
    pub fn new(variant: RiskVariant, input_dim: usize) -> Self {
        Self {
            model: RiskConfig::for_variant(variant, input_dim),
            train: TrainConfig::default(),
            validation_fraction: 0.15,
        }
    }
}

/// Encodes labeled threads; an unlabeled thread is an error.
pub fn risk_examples(
    model: &RiskModel,
    threads: &[ThreadInstance],
    encoder: &dyn SentenceEncoder,
    abbreviations: &Abbreviations,
) -> Result<Vec<(RiskInput, RiskLabel)>> {
    threads
        .par_iter()
        .map(|t| {
            let label = t
                .label
                .ok_or_else(|| Error::Data(format!("thread {} has no label", t.target.post_id)))?;
            Ok((model.prepare(t, encoder, abbreviations)?, label))
        })
        .collect()
}

pub fn train_risk(
    threads: &[ThreadInstance],
    validation: Option<&[ThreadInstance]>,
    task: &RiskTask,
    encoder: &dyn SentenceEncoder,
    abbreviations: &Abbreviations,
    seeds: &SeedStream,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(RiskModel, TrainOutcome)> {
    let mut model = RiskModel::new(task.model.clone(), seeds.clone())?;
    let all = risk_examples(&model, threads, encoder, abbreviations)?;
    let (train_data, val_data, train_ids, val_ids): (Vec<_>, Vec<_>, Vec<&str>, Vec<&str>) = match validation {
        Some(v) => (
            all,
            risk_examples(&model, v, encoder, abbreviations)?,
            threads.iter().map(|t| t.target.post_id.as_str()).collect(),
            v.iter().map(|t| t.target.post_id.as_str()).collect(),
        ),
        None => {
            let labels: Vec<usize> = all.iter().map(|(_, y)| y.index()).collect();
            let (kept, held) = stratified_holdout(&labels, task.validation_fraction, &mut seeds.child("holdout").rng())?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
            let ids = |idx: &[usize]| idx.iter().map(|&i| threads[i].target.post_id.as_str()).collect::<Vec<_>>();
            (pick(&kept), pick(&held), ids(&kept), ids(&held))
        }
    };
    ensure_disjoint(&[("train", train_ids), ("validation", val_ids)])?;
    let outcome = train(&mut model, &train_data, &val_data, &task.train, seeds, on_epoch)?;
    Ok((model, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadPrediction {
    pub post_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<RiskLabel>,
    pub pred: RiskLabel,
    /// Class probabilities, the regression value, or the distance to each class embedding.
    pub scores: Vec<f64>,
}

pub fn predict_threads(
    model: &RiskModel,
    threads: &[ThreadInstance],
    encoder: &dyn SentenceEncoder,
    abbreviations: &Abbreviations,
) -> Result<Vec<ThreadPrediction>> {
    threads
        .par_iter()
        .map(|t| {
            let x = model.prepare(t, encoder, abbreviations)?;
            let mut rng = SeedStream::new(0).rng();
            let fwd = model.forward(&x, Mode::Eval, &mut rng, false)?;
            let scores = match (&fwd.probs, model.class_embeddings()) {
                (Some(p), _) => p.clone(),
                (None, Some(c)) => (0..c.rows())
                    .map(|j| {
                        fwd.output
                            .iter()
                            .zip(c.row(j))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect(),
                (None, None) => fwd.output.clone(),
            };
            Ok(ThreadPrediction {
                post_id: t.target.post_id.clone(),
                gold: t.label,
                pred: model.predict_forward(&fwd),
                scores,
            })
        })
        .collect()
}
