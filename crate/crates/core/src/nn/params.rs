use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        }
    }
}

/// Named flat weight arrays, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
    frozen: BTreeSet<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Result<()> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape(format!(
                "parameter {name} of shape {shape:?} given {} values",
                values.len()
            )));
        }
        self.entries.insert(
            name,
            Param {
                shape: shape.to_vec(),
                values,
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> &[f64] {
        &self.param(name).values
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        match self.entries.get_mut(name) {
            Some(p) => &mut p.values,
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn param(&self, name: &str) -> &Param {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.values.len()).sum()
    }

    /// Excludes `name` from gradient computation and optimizer updates.
    pub fn freeze(&mut self, name: &str) {
        self.frozen.insert(name.to_string());
    }

    pub fn unfreeze(&mut self, name: &str) {
        self.frozen.remove(name);
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, p) in &self.entries {
            super::tensor::ensure_finite(&p.values, name)?;
        }
        Ok(())
    }
}

/// Gradients keyed and shaped exactly like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradStore {
    entries: BTreeMap<String, Param>,
}

impl GradStore {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            entries: params
                .entries
                .iter()
                .map(|(k, p)| (k.clone(), Param::zeros(&p.shape)))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> &[f64] {
        &self
            .entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown gradient {name}"))
            .values
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown gradient {name}"))
            .values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.values.as_slice()))
    }

    pub fn mirrors(&self, params: &ParamStore) -> bool {
        self.entries.len() == params.entries.len()
            && self
                .entries
                .iter()
                .zip(&params.entries)
                .all(|((ka, a), (kb, b))| ka == kb && a.shape == b.shape)
    }

    pub fn add_assign(&mut self, other: &GradStore) {
        for (k, p) in &mut self.entries {
            let o = other.get(k);
            for (a, b) in p.values.iter_mut().zip(o) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for p in self.entries.values_mut() {
            p.values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn fill_zero(&mut self) {
        for p in self.entries.values_mut() {
            p.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|p| p.values.iter().all(|&v| v == 0.0))
    }

    /// Zeroes the gradients of frozen parameters.
    pub fn mask_frozen(&mut self, params: &ParamStore) {
        for name in &params.frozen {
            if let Some(p) = self.entries.get_mut(name) {
                p.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, p) in &self.entries {
            super::tensor::ensure_finite(&p.values, &format!("gradient of {name}"))?;
        }
        Ok(())
    }
}

/// Glorot/Xavier uniform in `±√(6/(fan_in+fan_out))`.
pub fn glorot_uniform<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, limit, n)
}

pub fn uniform<R: Rng>(rng: &mut R, limit: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-limit..=limit)).collect()
}

/// Initial range for embedding tables.
pub const EMBEDDING_INIT: f64 = 0.05;
