//! Versioned JSON checkpoints. Weights are stored as base64 of
//! little-endian `f32` values.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedParam {
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// `depression` or `risk:<variant>`.
    pub model_kind: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vocabulary>,
    pub weights: BTreeMap<String, EncodedParam>,
    pub seed: u64,
    pub step: u64,
}

pub fn encode_f32(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32(data: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(data)
        .map_err(|e| Error::Data(format!("bad weight encoding: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Data("weight payload not a multiple of 4 bytes".into()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

impl Checkpoint {
    pub fn new(
        model_kind: impl Into<String>,
        config: serde_json::Value,
        vocabulary: Option<Vocabulary>,
        params: &ParamStore,
        seed: u64,
        step: u64,
    ) -> Self {
        let weights = params
            .iter()
            .map(|(k, p)| {
                (
                    k.to_string(),
                    EncodedParam {
                        shape: p.shape.clone(),
                        data: encode_f32(&p.values),
                    },
                )
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            model_kind: model_kind.into(),
            config,
            vocabulary,
            weights,
            seed,
            step,
        }
    }

    pub fn params(&self) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, p) in &self.weights {
            let values = decode_f32(&p.data)?;
            store.insert(name.clone(), &p.shape, values)?;
        }
        store.ensure_finite()?;
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint format version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip_at_f32_precision() {
        let mut p = ParamStore::new();
        p.insert("w", &[2, 2], vec![0.1, -2.5, 1e-3, 7.0]).unwrap();
        let ck = Checkpoint::new("depression", serde_json::json!({"x": 1}), None, &p, 9, 3);
        let back: Checkpoint = serde_json::from_str(&ck.to_json()).unwrap();
        let q = back.params().unwrap();
        for (a, b) in p.get("w").iter().zip(q.get("w")) {
            assert_eq!(*b, (*a as f32) as f64);
        }
        assert_eq!(back.step, 3);
        assert_eq!(back.seed, 9);
    }

    #[test]
    fn rejects_bad_payloads() {
        assert!(decode_f32("AAA").is_err());
        assert!(decode_f32(&STANDARD.encode([0u8; 3])).is_err());
    }
}
