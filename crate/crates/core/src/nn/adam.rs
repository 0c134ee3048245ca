use serde::{Deserialize, Serialize};

use super::params::{GradStore, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: GradStore,
    v: GradStore,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: GradStore::zeros_like(params),
            v: GradStore::zeros_like(params),
        }
    }
}

/// One bias-corrected Adam update. Frozen parameters are left untouched.
pub fn adam_step(params: &mut ParamStore, grads: &GradStore, state: &mut AdamState) -> Result<()> {
    if !grads.mirrors(params) || !state.m.mirrors(params) {
        return Err(Error::Shape("gradients do not mirror parameters".into()));
    }
    grads.ensure_finite()?;
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let names: Vec<String> = params.iter().map(|(k, _)| k.to_string()).collect();
    for name in names {
        if params.is_frozen(&name) {
            continue;
        }
        let g = grads.get(&name);
        let m = state.m.get_mut(&name);
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = state.v.get_mut(&name);
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let m = state.m.get(&name);
        let v = state.v.get(&name);
        let p = params.get_mut(&name);
        for i in 0..p.len() {
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
