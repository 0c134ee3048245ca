use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};

/// Tokens that end in a period but do not end a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abbreviations(HashSet<String>);

impl Default for Abbreviations {
    fn default() -> Self {
        Self::new([
            "dr.", "mr.", "mrs.", "ms.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.",
            "i.e.", "approx.", "no.",
        ])
    }
}

impl Abbreviations {
    pub fn new<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(
            items
                .into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect(),
        )
    }

    pub fn none() -> Self {
        Self(HashSet::new())
    }

    /// One abbreviation per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits at a run of `.`/`!`/`?` followed by whitespace and an uppercase
/// letter, unless the word carrying the period is a known abbreviation.
pub fn split_sentences(text: &str, abbreviations: &Abbreviations) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        if !is_terminal(chars[i].1) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < chars.len() && is_terminal(chars[j + 1].1) {
            j += 1;
        }
        let end = chars[j].0 + chars[j].1.len_utf8();
        let mut k = j + 1;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = k > j + 1 && k < chars.len() && chars[k].1.is_uppercase();
        if boundary && !ends_with_abbreviation(&text[start..end], abbreviations) {
            push_trimmed(&mut sentences, &text[start..end]);
            start = chars[k].0;
        }
        i = j + 1;
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn ends_with_abbreviation(segment: &str, abbreviations: &Abbreviations) -> bool {
    if !segment.ends_with('.') {
        return false;
    }
    let last = segment.split_whitespace().last().unwrap_or("");
    abbreviations.contains(last)
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
