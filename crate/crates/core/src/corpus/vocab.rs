use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::words;
use crate::error::{Error, Result};

/// Token ↔ id map. Id 0 is padding and id 1 the unknown token; every other id
/// maps to exactly one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    const PAD_TOKEN: &'static str = "<pad>";
    const UNK_TOKEN: &'static str = "<unk>";

    /// Vocabulary over the given tokens, assigned ids from 2 upward in order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![Self::PAD_TOKEN.to_string(), Self::UNK_TOKEN.to_string()];
        all.extend(tokens.into_iter().map(Into::into));
        Self::try_from(all)
    }

    /// Builds from raw texts, keeping words seen at least `min_freq` times.
    /// Ids are assigned by descending frequency, ties broken alphabetically.
    pub fn build<'a, I>(texts: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for w in words(text) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(w, _)| w))
            .expect("word tokens never collide with special tokens")
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Number of ids including the two special ones.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 2
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != Self::PAD_TOKEN || tokens[1] != Self::UNK_TOKEN {
            return Err(Error::Data(
                "vocabulary must start with <pad> and <unk>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate().skip(2) {
            if index.insert(t.clone(), i as u32).is_some() || t == Self::PAD_TOKEN || t == Self::UNK_TOKEN {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_respects_min_frequency() {
        let v = Vocabulary::build(["a a a b b c", "a b"], 2);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("c"), Vocabulary::UNK);
    }

    #[test]
    fn round_trip_ids() {
        let v = Vocabulary::build(["the cat sat on the mat"], 1);
        for id in 2..v.len() as u32 {
            assert_eq!(v.id(v.token(id).unwrap()), id);
        }
        assert_eq!(v.token(0), Some("<pad>"));
    }

    #[test]
    fn rejects_duplicates() {
        assert!(Vocabulary::from_tokens(["x", "x"]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::from_tokens(["x", "y"]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&s).unwrap(), v);
    }
}
