//! Seeded synthetic corpora: planted-phrase users for the depression task,
//! graded-cue threads for risk triage, and a raw post dump with diagnosis
//! claims and annotator votes for the dataset builder.

use std::collections::HashSet;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::io::{write_jsonl, write_users};
use crate::corpus::{words, Post, RiskLabel, ThreadInstance, UserLabel, UserRecord};
use crate::dataset::{AnnotationRow, SPLITS};
use crate::error::{Error, Result};
use crate::seed::{Rng as SeedRng, SeedStream};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn syllable(i: usize) -> [char; 2] {
    [
        CONSONANTS[i % CONSONANTS.len()] as char,
        VOWELS[i / CONSONANTS.len() % VOWELS.len()] as char,
    ]
}

/// Pronounceable filler word number `i`; distinct for distinct `i`.
pub fn filler_word(i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut s = String::new();
    let mut rest = i;
    s.extend(syllable(rest % base));
    rest /= base;
    s.extend(syllable(rest % base));
    rest /= base;
    while rest > 0 {
        s.extend(syllable((rest - 1) % base));
        rest = (rest - 1) / base;
    }
    s
}

/// Zipf-distributed filler vocabulary avoiding every word in `reserved`.
struct Background {
    words: Vec<String>,
    dist: WeightedIndex<f64>,
}

impl Background {
    fn new(size: usize, reserved: &HashSet<String>) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("background vocabulary must be non-empty".into()));
        }
        let words: Vec<String> = (0..)
            .map(filler_word)
            .filter(|w| !reserved.contains(w))
            .take(size)
            .collect();
        let dist = WeightedIndex::new((0..size).map(|r| 1.0 / (r + 1) as f64))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { words, dist })
    }

    fn word(&self, rng: &mut SeedRng) -> &str {
        &self.words[self.dist.sample(rng)]
    }

    fn words(&self, n: usize, rng: &mut SeedRng) -> Vec<String> {
        (0..n).map(|_| self.word(rng).to_string()).collect()
    }
}

fn sentence(mut ws: Vec<String>) -> String {
    if let Some(first) = ws.first_mut() {
        let mut c = first.chars();
        if let Some(h) = c.next() {
            *first = h.to_uppercase().chain(c).collect();
        }
    }
    let mut s = ws.join(" ");
    s.push('.');
    s
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepressionSynthSpec {
    pub n_positive: usize,
    pub controls_per_positive: usize,
    pub posts_per_user: usize,
    /// Fraction of each positive user's posts carrying a signal phrase.
    pub signal_rate: f64,
    pub signal_phrases: Vec<String>,
    pub vocab_size: usize,
    pub min_post_len: usize,
    pub max_post_len: usize,
    pub seed: u64,
}

impl Default for DepressionSynthSpec {
    fn default() -> Self {
        Self {
            n_positive: 200,
            controls_per_positive: 3,
            posts_per_user: 50,
            signal_rate: 0.05,
            signal_phrases: [
                "i feel so hopeless",
                "cannot stop crying",
                "my therapist said",
                "no energy for anything",
                "everything feels pointless",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            vocab_size: 2000,
            min_post_len: 8,
            max_post_len: 24,
            seed: 0,
        }
    }
}

/// Users grouped as train / validation / test.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDepression {
    pub splits: [Vec<UserRecord>; 3],
}

impl SynthDepression {
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, users) in SPLITS.iter().zip(&self.splits) {
            write_users(&dir.join(name), users)?;
        }
        Ok(())
    }
}

const COMMUNITIES: [&str; 12] = [
    "gaming", "cooking", "music", "movies", "books", "fitness", "travel", "science", "news", "pics", "sports", "diy",
];

/// Each positive user gets exactly `round(signal_rate · posts_per_user)`
/// posts with a signal phrase spliced into filler text; controls get none.
/// A positive user and its controls always land in the same split, with
/// groups divided 60/20/20.
pub fn synth_depression(spec: &DepressionSynthSpec) -> Result<SynthDepression> {
    check_rate("signal_rate", spec.signal_rate)?;
    if spec.posts_per_user == 0 || spec.min_post_len == 0 || spec.min_post_len > spec.max_post_len {
        return Err(Error::Config("posts need a positive count and a valid length range".into()));
    }
    if spec.signal_rate > 0.0 && spec.signal_phrases.is_empty() {
        return Err(Error::Config("a positive signal rate needs signal phrases".into()));
    }
    let reserved: HashSet<String> = spec.signal_phrases.iter().flat_map(|p| words(p)).collect();
    let seeds = SeedStream::new(spec.seed).child("synth.depression");
    let bg = Background::new(spec.vocab_size, &reserved)?;
    let n_signal = (spec.signal_rate * spec.posts_per_user as f64).round() as usize;
    let group_size = 1 + spec.controls_per_positive;
    let n_users = spec.n_positive * group_size;
    let width = n_users.max(1).to_string().len().max(4);

    // Shuffled ids so that id order carries no label information.
    let mut ids: Vec<usize> = (0..n_users).collect();
    ids.shuffle(&mut seeds.child("ids").rng());

    let mut groups: Vec<Vec<UserRecord>> = Vec::with_capacity(spec.n_positive);
    for g in 0..spec.n_positive {
        let mut members = Vec::with_capacity(group_size);
        for m in 0..group_size {
            let slot = g * group_size + m;
            let uid = format!("user{:0width$}", ids[slot]);
            let mut rng = seeds.child("user").index(slot as u64).rng();
            let positive = m == 0;
            let signal: HashSet<usize> = if positive {
                rand::seq::index::sample(&mut rng, spec.posts_per_user, n_signal.min(spec.posts_per_user))
                    .into_iter()
                    .collect()
            } else {
                HashSet::new()
            };
            let favourites: Vec<&str> = COMMUNITIES.choose_multiple(&mut rng, 3).copied().collect();
            let mut posts = Vec::with_capacity(spec.posts_per_user);
            for j in 0..spec.posts_per_user {
                let len = rng.gen_range(spec.min_post_len..=spec.max_post_len);
                let mut text = bg.words(len, &mut rng);
                if signal.contains(&j) {
                    let phrase = spec.signal_phrases.choose(&mut rng).expect("checked non-empty");
                    let at = rng.gen_range(0..=text.len());
                    text.splice(at..at, words(phrase));
                }
                posts.push(Post::new(
                    format!("{uid}-{j:04}"),
                    &uid,
                    *favourites.choose(&mut rng).expect("three favourites"),
                    1_500_000_000 + (j as i64) * 3600 + rng.gen_range(0..1800),
                    text.join(" "),
                ));
            }
            let (label, dx) = if positive {
                (UserLabel::Diagnosed, Some(format!("{uid}-dx")))
            } else {
                (UserLabel::Control, None)
            };
            members.push(UserRecord::new(uid, posts, label, dx)?);
        }
        groups.push(members);
    }
    groups.shuffle(&mut seeds.child("split").rng());
    let n_train = (groups.len() as f64 * 0.6).round() as usize;
    let n_val = (groups.len() as f64 * 0.2).round() as usize;
    let mut splits: [Vec<UserRecord>; 3] = Default::default();
    for (i, g) in groups.into_iter().enumerate() {
        let s = if i < n_train {
            0
        } else if i < n_train + n_val {
            1
        } else {
            2
        };
        splits[s].extend(g);
    }
    for s in &mut splits {
        s.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    }
    Ok(SynthDepression { splits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskSynthSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// Probability that a cue word comes from the instance's own level rather
    /// than a neighbouring one.
    pub cue_purity: f64,
    /// Probability that each context post carries a cue sentence.
    pub context_cue_rate: f64,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for RiskSynthSpec {
    fn default() -> Self {
        Self {
            n_train: 800,
            n_test: 200,
            cue_purity: 0.7,
            context_cue_rate: 0.3,
            vocab_size: 500,
            seed: 0,
        }
    }
}

/// Cue vocabulary per severity level, mildest first.
pub const CUE_WORDS: [[&str; 6]; 4] = [
    ["thanks", "better", "hopeful", "grateful", "calm", "support"],
    ["tired", "stressed", "lonely", "struggling", "anxious", "low"],
    ["hopeless", "worthless", "numb", "trapped", "hurting", "desperate"],
    ["tonight", "goodbye", "final", "ending", "unsafe", "farewell"],
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRisk {
    pub train: Vec<ThreadInstance>,
    pub test: Vec<ThreadInstance>,
}

impl SynthRisk {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        write_jsonl(&dir.join("test.jsonl"), &self.test)
    }
}

fn cue_sentence(level: usize, purity: f64, bg: &Background, rng: &mut SeedRng) -> String {
    let n_cues = rng.gen_range(3..=5);
    let mut ws = Vec::new();
    for _ in 0..n_cues {
        let from = if rng.gen_bool(purity) {
            level
        } else if level == 0 {
            1
        } else if level == RiskLabel::COUNT - 1 || rng.gen_bool(0.5) {
            level - 1
        } else {
            level + 1
        };
        ws.push(CUE_WORDS[from].choose(rng).expect("six cues").to_string());
    }
    for _ in 0..rng.gen_range(1..=2) {
        let at = rng.gen_range(0..=ws.len());
        ws.insert(at, bg.word(rng).to_string());
    }
    sentence(ws)
}

fn filler_sentence(bg: &Background, rng: &mut SeedRng) -> String {
    let n = rng.gen_range(4..=9);
    sentence(bg.words(n, rng))
}

/// Threads whose target posts mix filler sentences with one or two cue
/// sentences drawn mostly from the label's cue words and otherwise from an
/// adjacent level. Labels are balanced and shuffled.
pub fn synth_risk(spec: &RiskSynthSpec) -> Result<SynthRisk> {
    check_rate("cue_purity", spec.cue_purity)?;
    check_rate("context_cue_rate", spec.context_cue_rate)?;
    let reserved: HashSet<String> = CUE_WORDS.iter().flatten().map(|w| w.to_string()).collect();
    let bg = Background::new(spec.vocab_size, &reserved)?;
    let seeds = SeedStream::new(spec.seed).child("synth.risk");
    let total = spec.n_train + spec.n_test;
    let mut labels: Vec<usize> = (0..total).map(|i| i % RiskLabel::COUNT).collect();
    labels.shuffle(&mut seeds.child("labels").rng());
    let mut all = Vec::with_capacity(total);
    for (i, &level) in labels.iter().enumerate() {
        let mut rng = seeds.child("thread").index(i as u64).rng();
        let base = 1_600_000_000 + (i as i64) * 86_400;
        let mut context = Vec::new();
        for j in 0..rng.gen_range(0..=3) {
            let mut sents: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| filler_sentence(&bg, &mut rng)).collect();
            if rng.gen_bool(spec.context_cue_rate) {
                sents.push(cue_sentence(level, spec.cue_purity, &bg, &mut rng));
            }
            context.push(Post::new(
                format!("r{i:05}c{j}"),
                format!("ru{}", rng.gen_range(0..total / 2 + 1)),
                "forum",
                base + j as i64 * 600,
                sents.join(" "),
            ));
        }
        let mut sents: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| filler_sentence(&bg, &mut rng)).collect();
        for _ in 0..1 + level / 2 + rng.gen_range(0..=1) {
            sents.push(cue_sentence(level, spec.cue_purity, &bg, &mut rng));
        }
        sents.shuffle(&mut rng);
        let target = Post::new(
            format!("r{i:05}"),
            format!("ru{}", rng.gen_range(0..total / 2 + 1)),
            "forum",
            base + 3600,
            sents.join(" "),
        );
        all.push(ThreadInstance {
            target,
            context,
            label: RiskLabel::from_index(level),
        });
    }
    let test = all.split_off(spec.n_train);
    Ok(SynthRisk { train: all, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RawSynthSpec {
    pub n_diagnosed: usize,
    pub n_controls: usize,
    /// Users whose claim is negated or hypothetical and must not be detected.
    pub n_decoys: usize,
    /// Users whose claim matches but annotators reject.
    pub n_rejected: usize,
    pub min_posts: usize,
    pub max_posts: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for RawSynthSpec {
    fn default() -> Self {
        Self {
            n_diagnosed: 6,
            n_controls: 40,
            n_decoys: 3,
            n_rejected: 2,
            min_posts: 20,
            max_posts: 30,
            vocab_size: 300,
            seed: 0,
        }
    }
}

/// An unlabeled post dump and the annotator votes for its claim posts.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRaw {
    pub posts: Vec<Post>,
    pub annotations: Vec<AnnotationRow>,
}

impl SynthRaw {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("posts.jsonl"), &self.posts)?;
        write_jsonl(&dir.join("annotations.jsonl"), &self.annotations)
    }
}

const CLAIMS: [&str; 3] = [
    "I was diagnosed with depression last spring",
    "My doctor diagnosed me with depression a while ago",
    "Two years ago I was diagnosed with major depression",
];

const DECOY_CLAIMS: [&str; 3] = [
    "I was never diagnosed with depression though",
    "I wonder if I would be diagnosed with depression",
    "She said \"I was diagnosed with depression\" on the show",
];

/// Diagnosed users post a claim after at least `min_posts` ordinary posts
/// plus a few posts in a mental-health community; decoys and rejected
/// claimants exercise the detector and the vote threshold.
pub fn synth_raw(spec: &RawSynthSpec) -> Result<SynthRaw> {
    if spec.min_posts == 0 || spec.min_posts > spec.max_posts {
        return Err(Error::Config("invalid post count range".into()));
    }
    let reserved: HashSet<String> = CLAIMS.iter().chain(&DECOY_CLAIMS).flat_map(|c| words(c)).collect();
    let bg = Background::new(spec.vocab_size, &reserved)?;
    let seeds = SeedStream::new(spec.seed).child("synth.raw");
    let mut posts = Vec::new();
    let mut annotations = Vec::new();
    let kinds = [
        ("dx", spec.n_diagnosed),
        ("ctl", spec.n_controls),
        ("decoy", spec.n_decoys),
        ("rej", spec.n_rejected),
    ];
    for (kind, n) in kinds {
        for u in 0..n {
            let uid = format!("{kind}{u:03}");
            let mut rng = seeds.child(kind).index(u as u64).rng();
            let weights: Vec<f64> = (0..COMMUNITIES.len()).map(|_| rng.gen::<f64>().powi(3)).collect();
            let community = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
            let n_posts = rng.gen_range(spec.min_posts..=spec.max_posts);
            let mut t = 1_400_000_000i64 + rng.gen_range(0..86_400);
            let mut push = |posts: &mut Vec<Post>, community: &str, text: String, rng: &mut SeedRng| {
                let id = format!("{uid}-{:03}", posts.iter().filter(|p| p.user_id == uid).count());
                t += rng.gen_range(600..7200);
                posts.push(Post::new(id.clone(), &uid, community, t, text));
                id
            };
            for _ in 0..n_posts {
                let c = COMMUNITIES[community.sample(&mut rng)];
                let n = rng.gen_range(5..=15);
                let text = bg.words(n, &mut rng).join(" ");
                push(&mut posts, c, text, &mut rng);
            }
            match kind {
                "dx" | "rej" => {
                    let claim = CLAIMS.choose(&mut rng).expect("claims").to_string();
                    let id = push(&mut posts, "depression", claim, &mut rng);
                    let votes = if kind == "dx" { vec![true, true, rng.gen_bool(0.5)] } else { vec![true, false, false] };
                    annotations.push(AnnotationRow { post_id: id, votes });
                    for _ in 0..rng.gen_range(1..=3) {
                        let text = format!("feeling depressed again {}", bg.words(5, &mut rng).join(" "));
                        push(&mut posts, "depression", text, &mut rng);
                    }
                }
                "decoy" => {
                    let claim = DECOY_CLAIMS[u % DECOY_CLAIMS.len()].to_string();
                    push(&mut posts, "news", claim, &mut rng);
                }
                _ => {}
            }
        }
    }
    Ok(SynthRaw { posts, annotations })
}
