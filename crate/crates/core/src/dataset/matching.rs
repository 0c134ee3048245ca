use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hellinger, SubredditDistribution};

/// A user entering the matcher: id, activity level and posting distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchCandidate {
    pub user_id: String,
    pub post_count: usize,
    pub distribution: SubredditDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedControl {
    pub user_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMatches {
    pub user_id: String,
    pub controls: Vec<MatchedControl>,
    /// Fewer than `k` eligible controls were left.
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub matches: Vec<UserMatches>,
}

impl MatchResult {
    pub fn get(&self, diagnosed_id: &str) -> Option<&UserMatches> {
        self.matches.iter().find(|m| m.user_id == diagnosed_id)
    }

    pub fn short_count(&self) -> usize {
        self.matches.iter().filter(|m| m.short).count()
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.matches
            .iter()
            .flat_map(|m| m.controls.iter().map(|c| c.distance))
    }
}

/// Whether a control with `control_posts` lies in the inclusive ±`tol` window
/// around `diagnosed_posts`.
pub fn within_activity_window(diagnosed_posts: usize, control_posts: usize, tol: f64) -> bool {
    let n = diagnosed_posts as f64;
    let c = control_posts as f64;
    let slack = 1e-9 * n.max(1.0);
    c >= (1.0 - tol) * n - slack && c <= (1.0 + tol) * n + slack
}

/// Distances agreeing to twelve decimals count as ties.
fn tie_key(d: f64) -> i64 {
    (d * 1e12).round() as i64
}

/// Greedy matching without replacement.
///
/// Diagnosed users are served in the given order; each takes the `k` closest
/// (Hellinger) unmatched controls inside the activity window, ties broken by
/// control id.
pub fn greedy_match(
    diagnosed: &[MatchCandidate],
    pool: &[MatchCandidate],
    k: usize,
    tol: f64,
) -> MatchResult {
    let mut taken = vec![false; pool.len()];
    let mut matches = Vec::with_capacity(diagnosed.len());

    for d in diagnosed {
        let mut scored: Vec<(f64, usize)> = pool
            .par_iter()
            .enumerate()
            .filter(|(i, c)| !taken[*i] && within_activity_window(d.post_count, c.post_count, tol))
            .map(|(i, c)| (hellinger(&d.distribution, &c.distribution), i))
            .collect();
        scored.sort_by(|a, b| {
            tie_key(a.0)
                .cmp(&tie_key(b.0))
                .then_with(|| pool[a.1].user_id.cmp(&pool[b.1].user_id))
        });
        scored.truncate(k);
        for &(_, i) in &scored {
            taken[i] = true;
        }
        matches.push(UserMatches {
            user_id: d.user_id.clone(),
            short: scored.len() < k,
            controls: scored
                .into_iter()
                .map(|(distance, i)| MatchedControl {
                    user_id: pool[i].user_id.clone(),
                    distance,
                })
                .collect(),
        });
    }
    MatchResult { matches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn cand(id: &str, posts: usize, pairs: &[(&str, usize)]) -> MatchCandidate {
        let counts: BTreeMap<String, usize> =
            pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        MatchCandidate {
            user_id: id.into(),
            post_count: posts,
            distribution: SubredditDistribution::from_counts(&counts).unwrap(),
        }
    }

    #[test]
    fn shortage_is_flagged() {
        let d = [cand("d", 100, &[("a", 1)])];
        let pool: Vec<_> = (0..3).map(|i| cand(&format!("c{i}"), 100, &[("a", 1)])).collect();
        let r = greedy_match(&d, &pool, 12, 0.1);
        assert_eq!(r.matches[0].controls.len(), 3);
        assert!(r.matches[0].short);
        assert_eq!(r.short_count(), 1);
    }

    #[test]
    fn activity_window_is_inclusive_and_excludes_outside() {
        assert!(within_activity_window(100, 110, 0.1));
        assert!(within_activity_window(100, 90, 0.1));
        assert!(!within_activity_window(100, 120, 0.1));
        assert!(!within_activity_window(100, 89, 0.1));
        let d = [cand("d", 100, &[("a", 1)])];
        let pool = [cand("far", 120, &[("a", 1)]), cand("near", 105, &[("b", 1)])];
        let r = greedy_match(&d, &pool, 2, 0.1);
        assert_eq!(r.matches[0].controls.len(), 1);
        assert_eq!(r.matches[0].controls[0].user_id, "near");
    }

    #[test]
    fn controls_consumed_and_ties_by_id() {
        let d = [cand("d1", 10, &[("a", 1)]), cand("d2", 10, &[("a", 1)])];
        let pool = [
            cand("c2", 10, &[("a", 1)]),
            cand("c1", 10, &[("a", 1)]),
            cand("c3", 10, &[("a", 1), ("b", 1)]),
        ];
        let r = greedy_match(&d, &pool, 1, 0.1);
        assert_eq!(r.matches[0].controls[0].user_id, "c1");
        assert_eq!(r.matches[1].controls[0].user_id, "c2");
        assert_eq!(r.matches[1].controls[0].distance, 0.0);
    }
}
