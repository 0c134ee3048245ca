use std::ops::Range;

use super::Vocabulary;

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercased word tokens with their byte spans in `text`.
///
/// A token is a maximal run of alphanumeric characters; an apostrophe joins
/// two alphanumeric runs ("i've", "it's") and is normalized to `'`.
pub fn token_spans(text: &str) -> Vec<(String, Range<usize>)> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut current = String::new();
    let mut start = 0usize;
    let mut end = 0usize;

    while let Some((i, c)) = chars.next() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.extend(c.to_lowercase());
            end = i + c.len_utf8();
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.peek().is_some_and(|&(_, n)| n.is_alphanumeric())
        {
            current.push('\'');
            end = i + c.len_utf8();
        } else if !current.is_empty() {
            out.push((std::mem::take(&mut current), start..end));
        }
    }
    if !current.is_empty() {
        out.push((current, start..end));
    }
    out
}

pub fn words(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|(w, _)| w).collect()
}

/// Maps `text` to vocabulary ids; out-of-vocabulary words become [`Vocabulary::UNK`].
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    token_spans(text)
        .iter()
        .map(|(w, _)| vocab.id(w))
        .collect()
}
