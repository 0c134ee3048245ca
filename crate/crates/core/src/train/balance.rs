use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    /// Every instance once per epoch, loss scaled by `N / (t·N_c)`.
    Weighted,
    /// An equal number of instances per class each epoch (the smallest class size).
    Sampled,
}

impl std::str::FromStr for BalanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(BalanceMode::Weighted),
            "sampled" => Ok(BalanceMode::Sampled),
            _ => Err(Error::invalid(format!("unknown balance mode {s:?}"))),
        }
    }
}

fn class_counts(labels: &[usize], classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::invalid(format!("label {l} out of {classes} classes")))? += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("class {empty} has no training instances")));
    }
    Ok(counts)
}

/// Per-class weights `w_c = N / (t·N_c)`.
pub fn class_weights(labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    let counts = class_counts(labels, classes)?;
    let n = labels.len() as f64;
    Ok(counts
        .iter()
        .map(|&c| n / (classes as f64 * c as f64))
        .collect())
}

/// Indices of one balanced epoch: the smallest class size drawn without
/// replacement from every class, in shuffled order.
pub fn balanced_sample<R: Rng>(labels: &[usize], classes: usize, rng: &mut R) -> Result<Vec<usize>> {
    let counts = class_counts(labels, classes)?;
    let per_class = *counts.iter().min().expect("at least one class");
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut out = Vec::with_capacity(per_class * classes);
    for members in &by_class {
        out.extend(members.choose_multiple(rng, per_class).copied());
    }
    out.shuffle(rng);
    Ok(out)
}

/// One epoch's visiting order and per-instance loss weights.
pub fn epoch_plan<R: Rng>(labels: &[usize], classes: usize, mode: BalanceMode, rng: &mut R) -> Result<Vec<(usize, f64)>> {
    match mode {
        BalanceMode::Weighted => {
            let w = class_weights(labels, classes)?;
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.shuffle(rng);
            Ok(order.into_iter().map(|i| (i, w[labels[i]])).collect())
        }
        BalanceMode::Sampled => Ok(balanced_sample(labels, classes, rng)?
            .into_iter()
            .map(|i| (i, 1.0))
            .collect()),
    }
}
