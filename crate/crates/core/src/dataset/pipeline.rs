//! End-to-end construction of a control-matched depression dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    eligible_control, eligible_diagnosed, find_diagnosis_post, greedy_match,
    scrub_diagnosed_posts, subreddit_distribution, DiagnosisPattern, MatchCandidate, MatchResult,
    MentalHealthFilter, PatternSpec,
};
use crate::corpus::io::{group_by_user, read_jsonl, write_users};
use crate::corpus::{Post, UserLabel, UserRecord};
use crate::error::{Error, Result};
use crate::seed::SeedStream;

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub mh_communities: Vec<String>,
    pub mh_terms: Vec<String>,
    #[serde(flatten)]
    pub patterns: PatternSpec,
    /// Controls matched per diagnosed user.
    pub k: usize,
    /// Relative post-count window for matched controls.
    pub tol: f64,
    pub min_prior_posts: usize,
    pub min_votes: usize,
    pub annotations: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        Self {
            mh_communities: s(&[
                "depression", "anxiety", "mentalhealth", "suicidewatch", "bipolar", "bpd",
                "ptsd", "adhd", "ocd", "schizophrenia", "eatingdisorders", "selfharm",
                "depression_help", "socialanxiety", "therapy", "psychiatry",
            ]),
            mh_terms: s(&[
                "depression", "depressed", "depressive", "anxiety", "anxious", "suicide",
                "suicidal", "antidepressant", "antidepressants", "ssri", "ssris", "zoloft",
                "prozac", "lexapro", "therapist", "therapy", "psychiatrist", "bipolar", "ptsd",
                "mdd", "selfharm", "diagnosed",
            ]),
            patterns: PatternSpec::default(),
            k: 12,
            tol: 0.10,
            min_prior_posts: 100,
            min_votes: 2,
            annotations: None,
        }
    }
}

impl DatasetConfig {
    pub fn filter(&self) -> MentalHealthFilter {
        MentalHealthFilter::new(&self.mh_communities, &self.mh_terms)
    }
}

/// One line of an annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub post_id: String,
    pub votes: Vec<bool>,
}

/// Annotator votes per diagnosis-post id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations(BTreeMap<String, Vec<bool>>);

impl Annotations {
    pub fn new(map: BTreeMap<String, Vec<bool>>) -> Self {
        Self(map)
    }

    /// Rows `{"post_id": ..., "votes": [true, false, ...]}`; malformed or
    /// duplicated rows are reported with their line number.
    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<AnnotationRow> = read_jsonl(path)?;
        let mut map = BTreeMap::new();
        for (i, row) in rows.into_iter().enumerate() {
            if map.insert(row.post_id.clone(), row.votes).is_some() {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: i + 1,
                    message: format!("duplicate annotation for post {}", row.post_id),
                });
            }
        }
        Ok(Self(map))
    }

    pub fn positive_votes(&self, post_id: &str) -> Option<usize> {
        self.0.get(post_id).map(|v| v.iter().filter(|&&b| b).count())
    }
}

/// A user whose diagnosis post matched the claim patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisCandidate {
    pub user: UserRecord,
    pub diagnosis_post_id: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationOutcome {
    pub confirmed: Vec<DiagnosisCandidate>,
    pub dropped: usize,
    /// Annotated post ids that are not candidate diagnosis posts.
    pub unknown_post_ids: Vec<String>,
}

/// Keeps candidates whose diagnosis post received at least `min_votes` positive votes.
pub fn apply_annotations(
    candidates: Vec<DiagnosisCandidate>,
    annotations: &Annotations,
    min_votes: usize,
) -> AnnotationOutcome {
    let known: BTreeSet<&str> = candidates.iter().map(|c| c.diagnosis_post_id.as_str()).collect();
    let unknown_post_ids = annotations
        .0
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect();
    let (confirmed, dropped): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|c| {
        annotations
            .positive_votes(&c.diagnosis_post_id)
            .is_some_and(|n| n >= min_votes)
    });
    AnnotationOutcome {
        confirmed,
        dropped: dropped.len(),
        unknown_post_ids,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub users: usize,
    pub candidates: usize,
    pub confirmed: usize,
    pub annotation_dropped: usize,
    pub annotation_unknown: usize,
    pub too_few_prior_posts: usize,
    pub empty_after_scrub: usize,
    pub control_pool: usize,
    pub diagnosed: usize,
    pub matched_controls: usize,
    pub short_matches: usize,
    /// Counts of matched distances in ten equal bins over [0, 1].
    pub distance_histogram: [usize; 10],
    pub split_sizes: BTreeMap<String, [usize; 2]>,
}

impl BuildReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "users in corpus            {}", self.users);
        let _ = writeln!(s, "pattern candidates         {}", self.candidates);
        let _ = writeln!(s, "confirmed by annotation    {}", self.confirmed);
        let _ = writeln!(s, "  dropped (votes)          {}", self.annotation_dropped);
        let _ = writeln!(s, "  unknown annotated posts  {}", self.annotation_unknown);
        let _ = writeln!(s, "too few prior posts        {}", self.too_few_prior_posts);
        let _ = writeln!(s, "empty after scrubbing      {}", self.empty_after_scrub);
        let _ = writeln!(s, "diagnosed users            {}", self.diagnosed);
        let _ = writeln!(s, "control pool               {}", self.control_pool);
        let _ = writeln!(s, "matched controls           {}", self.matched_controls);
        let _ = writeln!(s, "short match lists          {}", self.short_matches);
        let _ = writeln!(s, "\nhellinger distance histogram");
        for (i, n) in self.distance_histogram.iter().enumerate() {
            let _ = writeln!(s, "  [{:.1}, {:.1}{} {n}", i as f64 / 10.0, (i + 1) as f64 / 10.0, if i == 9 { "]" } else { ")" });
        }
        let _ = writeln!(s, "\nsplit        diagnosed  control");
        for name in SPLITS {
            if let Some([d, c]) = self.split_sizes.get(name) {
                let _ = writeln!(s, "{name:<12} {d:>9}  {c:>7}");
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset {
    /// Users per split, in the order of [`SPLITS`].
    pub splits: [Vec<UserRecord>; 3],
    pub matching: MatchResult,
    pub report: BuildReport,
}

impl BuiltDataset {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, users) in SPLITS.iter().zip(&self.splits) {
            write_users(&dir.join(name), users)?;
        }
        write_text(&dir.join("matching.json"), &pretty_json(&self.matching))?;
        write_text(&dir.join("report.json"), &pretty_json(&self.report))?;
        write_text(&dir.join("report.txt"), &self.report.render())
    }
}

pub(crate) fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs detection, annotation filtering, eligibility, scrubbing, matching and
/// the per-user three-way split.
pub fn build_dataset(
    posts: Vec<Post>,
    annotations: &Annotations,
    config: &DatasetConfig,
    seeds: SeedStream,
) -> Result<BuiltDataset> {
    let pattern = DiagnosisPattern::new(config.patterns.clone())?;
    let filter = config.filter();
    let by_user = group_by_user(posts);
    let mut report = BuildReport {
        users: by_user.len(),
        ..Default::default()
    };

    let mut candidates = Vec::new();
    let mut pool_users = Vec::new();
    for (user_id, posts) in by_user {
        let user = UserRecord::new(user_id, posts, UserLabel::Control, None)?;
        match find_diagnosis_post(&user, &pattern) {
            Some(m) => candidates.push(DiagnosisCandidate {
                user,
                diagnosis_post_id: m.post_id,
            }),
            None => {
                if eligible_control(&user, &filter) {
                    pool_users.push(user);
                }
            }
        }
    }
    report.candidates = candidates.len();
    report.control_pool = pool_users.len();
    if pool_users.is_empty() {
        return Err(Error::Data("control pool is empty".into()));
    }

    let outcome = apply_annotations(candidates, annotations, config.min_votes);
    report.confirmed = outcome.confirmed.len();
    report.annotation_dropped = outcome.dropped;
    report.annotation_unknown = outcome.unknown_post_ids.len();

    let mut diagnosed = Vec::new();
    for c in outcome.confirmed {
        if !eligible_diagnosed(&c.user, &c.diagnosis_post_id, config.min_prior_posts) {
            report.too_few_prior_posts += 1;
            continue;
        }
        let user = UserRecord {
            label: UserLabel::Diagnosed,
            diagnosis_post_id: Some(c.diagnosis_post_id),
            ..c.user
        };
        let scrubbed = scrub_diagnosed_posts(&user, &filter);
        if scrubbed.posts.is_empty() {
            report.empty_after_scrub += 1;
            continue;
        }
        diagnosed.push(scrubbed);
    }
    if diagnosed.is_empty() {
        return Err(Error::Data("no diagnosed users survived filtering".into()));
    }
    report.diagnosed = diagnosed.len();

    let to_candidates = |users: &[UserRecord]| -> Result<Vec<MatchCandidate>> {
        users
            .par_iter()
            .map(|u| {
                Ok(MatchCandidate {
                    user_id: u.user_id.clone(),
                    post_count: u.posts.len(),
                    distribution: subreddit_distribution(u, &filter, true)?,
                })
            })
            .collect()
    };
    let diag_candidates = to_candidates(&diagnosed)?;
    let pool_candidates = to_candidates(&pool_users)?;
    let matching = greedy_match(&diag_candidates, &pool_candidates, config.k, config.tol);

    report.short_matches = matching.short_count();
    for d in matching.distances() {
        report.matched_controls += 1;
        report.distance_histogram[((d * 10.0) as usize).min(9)] += 1;
    }

    let mut order: Vec<usize> = (0..diagnosed.len()).collect();
    order.shuffle(&mut seeds.child("dataset.split").rng());
    let mut split_of = vec![0usize; diagnosed.len()];
    for (rank, &i) in order.iter().enumerate() {
        split_of[i] = rank % 3;
    }

    let mut pool_by_id: HashMap<String, UserRecord> = pool_users
        .into_iter()
        .map(|u| (u.user_id.clone(), u))
        .collect();
    let mut splits: [Vec<UserRecord>; 3] = Default::default();
    for ((user, m), split) in diagnosed.into_iter().zip(&matching.matches).zip(split_of) {
        debug_assert_eq!(user.user_id, m.user_id);
        splits[split].push(user);
        for c in &m.controls {
            let control = pool_by_id
                .remove(&c.user_id)
                .expect("each control is matched at most once");
            splits[split].push(control);
        }
    }
    for (name, users) in SPLITS.iter().zip(splits.iter_mut()) {
        users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        let d = users.iter().filter(|u| u.label == UserLabel::Diagnosed).count();
        report
            .split_sizes
            .insert(name.to_string(), [d, users.len() - d]);
    }

    Ok(BuiltDataset {
        splits,
        matching,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(id: &str, user: &str, community: &str, ts: i64, text: &str) -> Post {
        Post::new(id, user, community, ts, text)
    }

    #[test]
    fn annotation_thresholds() {
        let mk = |id: &str| DiagnosisCandidate {
            user: UserRecord::new(id, vec![], UserLabel::Control, None).unwrap(),
            diagnosis_post_id: format!("p_{id}"),
        };
        let ann = Annotations::new(
            [
                ("p_a".to_string(), vec![true, true, false]),
                ("p_b".to_string(), vec![true, false, false]),
                ("p_c".to_string(), vec![]),
                ("p_zzz".to_string(), vec![true, true, true]),
            ]
            .into(),
        );
        let out = apply_annotations(vec![mk("a"), mk("b"), mk("c"), mk("d")], &ann, 2);
        assert_eq!(out.confirmed.len(), 1);
        assert_eq!(out.confirmed[0].user.user_id, "a");
        assert_eq!(out.dropped, 3);
        assert_eq!(out.unknown_post_ids, vec!["p_zzz".to_string()]);
    }

    #[test]
    fn malformed_annotation_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        std::fs::write(&path, "{\"post_id\":\"x\",\"votes\":[true]}\n{\"post_id\":\"y\",\"votes\":\"yes\"}\n").unwrap();
        match Annotations::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_pool_is_an_error() {
        let posts = vec![
            post("d0", "d", "a", 0, "hello"),
            post("d1", "d", "a", 1, "I was diagnosed with depression"),
        ];
        let ann = Annotations::new([("d1".to_string(), vec![true, true])].into());
        let cfg = DatasetConfig {
            min_prior_posts: 1,
            ..Default::default()
        };
        let err = build_dataset(posts, &ann, &cfg, SeedStream::new(1)).unwrap_err();
        assert!(err.to_string().contains("control pool"));
    }

    #[test]
    fn small_pipeline_end_to_end() {
        let mut posts = vec![];
        for i in 0..4 {
            posts.push(post(&format!("d{i}"), "dx", "gaming", i, "gg"));
        }
        posts.push(post("d4", "dx", "depression", 4, "hello there"));
        posts.push(post("d5", "dx", "gaming", 5, "I was just diagnosed with depression."));
        posts.push(post("d6", "dx", "cooking", 6, "pasta"));
        for c in 0..3 {
            for i in 0..5 {
                let community = if c == 2 { "cooking" } else { "gaming" };
                posts.push(post(&format!("c{c}_{i}"), &format!("ctl{c}"), community, i, "ok"));
            }
        }
        posts.push(post("x0", "tainted", "gaming", 0, "feeling depressed"));
        let ann = Annotations::new([("d5".to_string(), vec![true, true, false])].into());
        let cfg = DatasetConfig {
            k: 2,
            tol: 0.5,
            min_prior_posts: 5,
            ..Default::default()
        };
        let built = build_dataset(posts, &ann, &cfg, SeedStream::new(9)).unwrap();
        assert_eq!(built.report.control_pool, 3);
        assert_eq!(built.report.diagnosed, 1);
        let m = built.matching.get("dx").unwrap();
        assert_eq!(m.controls.len(), 2);
        assert_eq!(m.controls[0].user_id, "ctl0");
        let all: Vec<&UserRecord> = built.splits.iter().flatten().collect();
        assert_eq!(all.len(), 3);
        let dx = all.iter().find(|u| u.user_id == "dx").unwrap();
        // depression-community post and the diagnosis post are scrubbed
        assert_eq!(dx.posts.len(), 5);
    }
}
