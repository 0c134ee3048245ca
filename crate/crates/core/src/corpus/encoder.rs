//! Sentence encoders producing fixed-width vectors for the risk model.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::words;
use crate::error::{Error, Result};
use crate::seed::fnv1a64;

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector(pub Vec<f64>);

impl SentenceVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &SentenceVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let n = self.norm() * other.norm();
        if n == 0.0 {
            0.0
        } else {
            dot / n
        }
    }
}

pub trait SentenceEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, sentence: &str) -> Result<SentenceVector>;
}

/// Signed feature hashing of word unigrams and bigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEncoder {
    dim: usize,
    seed: u64,
}

impl HashedEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("encoder dimension must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    fn bucket(&self, kind: u8, feature: &str) -> (usize, f64) {
        let mut bytes = Vec::with_capacity(feature.len() + 9);
        bytes.extend_from_slice(&self.seed.to_le_bytes());
        bytes.push(kind);
        bytes.extend_from_slice(feature.as_bytes());
        let h = fnv1a64(&bytes);
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

impl SentenceEncoder for HashedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentence: &str) -> Result<SentenceVector> {
        let tokens = words(sentence);
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            let (i, s) = self.bucket(b'u', t);
            v[i] += s;
        }
        for pair in tokens.windows(2) {
            let (i, s) = self.bucket(b'b', &format!("{} {}", pair[0], pair[1]));
            v[i] += 0.5 * s;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(SentenceVector(v))
    }
}

/// Lookup key of a sentence in a precomputed vector file: hex SHA-256 of its UTF-8 bytes.
pub fn sentence_key(sentence: &str) -> String {
    Sha256::digest(sentence.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Deserialize)]
struct VectorRow {
    key: Option<String>,
    sentence: Option<String>,
    vector: Vec<f64>,
}

/// Precomputed vectors, e.g. exported from an external sentence model.
///
/// File format: one JSON object per line with `vector` and either `key`
/// (see [`sentence_key`]) or the raw `sentence`.
#[derive(Debug, Clone)]
pub struct FileEncoder {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileEncoder {
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (sentence, v) in pairs {
            check_vector(&v, &mut dim, &sentence)?;
            vectors.insert(sentence_key(&sentence), v);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                file: path.display().to_string(),
                line: n + 1,
                message,
            };
            let row: VectorRow =
                serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let key = match (row.key, row.sentence) {
                (Some(k), _) => k,
                (None, Some(s)) => sentence_key(&s),
                (None, None) => return Err(parse_err("row needs `key` or `sentence`".into())),
            };
            check_vector(&row.vector, &mut dim, &key).map_err(|e| parse_err(e.to_string()))?;
            vectors.insert(key, row.vector);
        }
        Ok(Self {
            dim: dim.unwrap_or(0),
            vectors,
        })
    }
}

fn check_vector(v: &[f64], dim: &mut Option<usize>, what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("vector for {what}")));
    }
    match *dim {
        Some(d) if d != v.len() => Err(Error::Shape(format!(
            "vector for {what} has {} entries, expected {d}",
            v.len()
        ))),
        _ => {
            *dim = Some(v.len());
            Ok(())
        }
    }
}

impl SentenceEncoder for FileEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentence: &str) -> Result<SentenceVector> {
        self.vectors
            .get(&sentence_key(sentence))
            .map(|v| SentenceVector(v.clone()))
            .ok_or_else(|| Error::MissingSentence(sentence.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderConfig {
    Hashed { dim: usize, seed: u64 },
    File { path: PathBuf },
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Hashed { dim: 256, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn build(&self) -> Result<Box<dyn SentenceEncoder>> {
        Ok(match self {
            EncoderConfig::Hashed { dim, seed } => Box::new(HashedEncoder::new(*dim, *seed)?),
            EncoderConfig::File { path } => Box::new(FileEncoder::load(path)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_is_deterministic_and_normalized() {
        let enc = HashedEncoder::new(64, 3).unwrap();
        let a = enc.encode("I could not sleep again.").unwrap();
        let b = enc.encode("I could not sleep again.").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!((a.cosine(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hashed_empty_is_zero() {
        let enc = HashedEncoder::new(16, 0).unwrap();
        assert!(enc.encode("").unwrap().0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hashed_disjoint_sentences_are_nearly_orthogonal() {
        let enc = HashedEncoder::new(1024, 11).unwrap();
        let a = enc.encode("the weather was lovely at the beach").unwrap();
        let b = enc.encode("my exam results arrived yesterday morning").unwrap();
        assert!(a.cosine(&b).abs() < 0.2);
    }

    #[test]
    fn file_encoder_lookup_and_missing_key() {
        let enc = FileEncoder::from_pairs([("Hello.".to_string(), vec![1.0, 0.0])]).unwrap();
        assert_eq!(enc.dim(), 2);
        assert_eq!(enc.encode("Hello.").unwrap().0, vec![1.0, 0.0]);
        match enc.encode("Bye.") {
            Err(Error::MissingSentence(s)) => assert_eq!(s, "Bye."),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_encoder_loads_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        std::fs::write(
            &path,
            format!(
                "{{\"sentence\": \"A b.\", \"vector\": [0.5, 0.5]}}\n\n{{\"key\": \"{}\", \"vector\": [1, 2]}}\n",
                sentence_key("C.")
            ),
        )
        .unwrap();
        let enc = FileEncoder::load(&path).unwrap();
        assert_eq!(enc.encode("C.").unwrap().0, vec![1.0, 2.0]);
        std::fs::write(&path, "{\"sentence\": \"x\", \"vector\": [1]}\n{\"sentence\": \"y\", \"vector\": [1, 2]}\n").unwrap();
        match FileEncoder::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
