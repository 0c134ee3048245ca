use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{token_spans, words, UserRecord};
use crate::error::{Error, Result};

/// High-precision diagnosis claim patterns plus the cues that veto a match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatternSpec", into = "PatternSpec")]
pub struct DiagnosisPattern {
    patterns: Vec<Vec<String>>,
    negation_cues: Vec<String>,
    hypothetical_cues: Vec<String>,
    window: usize,
    reject_quoted: bool,
}

/// Serialized form of [`DiagnosisPattern`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternSpec {
    pub patterns: Vec<String>,
    pub negation_cues: Vec<String>,
    pub hypothetical_cues: Vec<String>,
    pub cue_window: usize,
    pub reject_quoted: bool,
}

impl Default for PatternSpec {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        Self {
            patterns: s(&[
                "diagnosed with depression",
                "diagnosed with clinical depression",
                "diagnosed with major depression",
                "diagnosed with major depressive disorder",
                "diagnosed me with depression",
                "diagnosed with mdd",
            ]),
            negation_cues: s(&[
                "not", "never", "no", "nobody", "don't", "didn't", "wasn't", "haven't", "hasn't",
                "isn't", "aren't", "without",
            ]),
            hypothetical_cues: s(&[
                "if", "unless", "whether", "would", "could", "might", "maybe", "suppose",
                "imagine", "hypothetically",
            ]),
            cue_window: 5,
            reject_quoted: true,
        }
    }
}

impl TryFrom<PatternSpec> for DiagnosisPattern {
    type Error = Error;

    fn try_from(spec: PatternSpec) -> Result<Self> {
        let patterns: Vec<Vec<String>> = spec
            .patterns
            .iter()
            .map(|p| words(p))
            .filter(|p| !p.is_empty())
            .collect();
        if patterns.is_empty() {
            return Err(Error::Config("at least one diagnosis pattern is required".into()));
        }
        let norm = |cues: &[String]| -> Vec<String> {
            cues.iter().flat_map(|c| words(c)).collect()
        };
        let negation_cues = norm(&spec.negation_cues);
        let hypothetical_cues = norm(&spec.hypothetical_cues);
        for cue in negation_cues.iter().chain(&hypothetical_cues) {
            if patterns.iter().any(|p| p.contains(cue)) {
                return Err(Error::Config(format!(
                    "cue {cue:?} also occurs inside a diagnosis pattern"
                )));
            }
        }
        Ok(Self {
            patterns,
            negation_cues,
            hypothetical_cues,
            window: spec.cue_window,
            reject_quoted: spec.reject_quoted,
        })
    }
}

impl From<DiagnosisPattern> for PatternSpec {
    fn from(p: DiagnosisPattern) -> Self {
        Self {
            patterns: p.patterns.iter().map(|w| w.join(" ")).collect(),
            negation_cues: p.negation_cues,
            hypothetical_cues: p.hypothetical_cues,
            cue_window: p.window,
            reject_quoted: p.reject_quoted,
        }
    }
}

impl Default for DiagnosisPattern {
    fn default() -> Self {
        PatternSpec::default().try_into().expect("default patterns are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosisMatch {
    pub post_id: String,
    /// Byte range of the matched pattern in the post text.
    pub span: Range<usize>,
}

impl DiagnosisPattern {
    pub fn new(spec: PatternSpec) -> Result<Self> {
        spec.try_into()
    }

    /// First accepted pattern occurrence in `text`, as a byte range.
    pub fn find_in(&self, text: &str) -> Option<Range<usize>> {
        let tokens = token_spans(text);
        for start in 0..tokens.len() {
            for pat in &self.patterns {
                let end = start + pat.len();
                if end > tokens.len() || tokens[start..end].iter().zip(pat).any(|((t, _), p)| t != p) {
                    continue;
                }
                let lo = start.saturating_sub(self.window);
                let vetoed = tokens[lo..start].iter().any(|(t, _)| {
                    self.negation_cues.contains(t) || self.hypothetical_cues.contains(t)
                });
                let span = tokens[start].1.start..tokens[end - 1].1.end;
                if !vetoed && !(self.reject_quoted && is_quoted(text, span.start)) {
                    return Some(span);
                }
            }
        }
        None
    }
}

/// True when `pos` lies inside an unclosed quotation opened earlier in `text`.
///
/// Double quotes toggle; curly quotes open and close. A straight or curly
/// single quote between two letters is an apostrophe and ignored; otherwise
/// it opens when followed by a letter and closes when it follows one.
fn is_quoted(text: &str, pos: usize) -> bool {
    let mut in_double = false;
    let mut in_single = false;
    let mut prev: Option<char> = None;
    let mut iter = text[..pos].chars().peekable();
    while let Some(c) = iter.next() {
        // Lookahead may cross `pos`; the match itself always starts with a word.
        let next = iter.peek().copied().or_else(|| text[pos..].chars().next());
        let prev_word = prev.is_some_and(char::is_alphanumeric);
        let next_word = next.is_some_and(char::is_alphanumeric);
        match c {
            '"' => in_double = !in_double,
            '\u{201c}' => in_double = true,
            '\u{201d}' => in_double = false,
            '\'' | '\u{2018}' | '\u{2019}' => {
                if prev_word && next_word {
                    // apostrophe
                } else if next_word && !prev_word {
                    in_single = true;
                } else {
                    in_single = false;
                }
            }
            _ => {}
        }
        prev = Some(c);
    }
    in_double || in_single
}

/// Earliest post of `user` containing an accepted diagnosis claim.
pub fn find_diagnosis_post(user: &UserRecord, pattern: &DiagnosisPattern) -> Option<DiagnosisMatch> {
    user.posts.iter().find_map(|p| {
        pattern.find_in(&p.text).map(|span| DiagnosisMatch {
            post_id: p.post_id.clone(),
            span,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Post, UserLabel};

    fn user(texts: &[&str]) -> UserRecord {
        let posts = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Post::new(format!("p{i}"), "u", "c", i as i64, *t))
            .collect();
        UserRecord::new("u", posts, UserLabel::Control, None).unwrap()
    }

    #[test]
    fn plain_claim_matches() {
        let pat = DiagnosisPattern::default();
        let text = "I was just diagnosed with depression.";
        let m = find_diagnosis_post(&user(&[text]), &pat).unwrap();
        assert_eq!(&text[m.span], "diagnosed with depression");
    }

    #[test]
    fn hypothetical_rejected() {
        let pat = DiagnosisPattern::default();
        assert!(pat.find_in("if I was diagnosed with depression").is_none());
    }

    #[test]
    fn negation_rejected() {
        let pat = DiagnosisPattern::default();
        assert!(pat
            .find_in("it's not like I've been diagnosed with depression")
            .is_none());
    }

    #[test]
    fn quotation_rejected() {
        let pat = DiagnosisPattern::default();
        assert!(pat
            .find_in("my brother announced 'I was just diagnosed with depression'")
            .is_none());
        assert!(pat
            .find_in("she said \"I was diagnosed with depression\" today")
            .is_none());
        assert!(pat
            .find_in("I've been fine. Last year I was diagnosed with depression")
            .is_some());
    }

    #[test]
    fn cue_outside_window_does_not_veto() {
        let pat = DiagnosisPattern::default();
        assert!(pat
            .find_in("not that it matters much now but I got diagnosed with depression")
            .is_some());
    }

    #[test]
    fn earliest_post_wins_and_later_occurrence_can_match() {
        let pat = DiagnosisPattern::default();
        let u = user(&[
            "nothing here",
            "if I was diagnosed with depression. Anyway, I was diagnosed with depression in May",
            "I was diagnosed with depression",
        ]);
        let m = find_diagnosis_post(&u, &pat).unwrap();
        assert_eq!(m.post_id, "p1");
        assert!(m.span.start > 40);
    }

    #[test]
    fn overlapping_cue_is_a_config_error() {
        let spec = PatternSpec {
            negation_cues: vec!["with".into()],
            ..PatternSpec::default()
        };
        assert!(DiagnosisPattern::new(spec).is_err());
    }
}
