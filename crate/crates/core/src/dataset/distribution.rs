use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MentalHealthFilter;
use crate::corpus::{UserLabel, UserRecord};
use crate::error::{Error, Result};

/// Probability of a user posting in each community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct SubredditDistribution(BTreeMap<String, f64>);

impl SubredditDistribution {
    pub fn from_counts(counts: &BTreeMap<String, usize>) -> Result<Self> {
        let total: usize = counts.values().sum();
        if total == 0 {
            return Err(Error::Data("distribution over zero posts".into()));
        }
        Ok(Self(
            counts
                .iter()
                .filter(|(_, &c)| c > 0)
                .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
                .collect(),
        ))
    }

    pub fn get(&self, community: &str) -> f64 {
        self.0.get(community).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn support_len(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<BTreeMap<String, f64>> for SubredditDistribution {
    type Error = Error;

    fn try_from(map: BTreeMap<String, f64>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::Data("distribution with empty support".into()));
        }
        if map.values().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Data("distribution with negative or non-finite mass".into()));
        }
        let sum: f64 = map.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("distribution sums to {sum}")));
        }
        Ok(Self(map))
    }
}

impl From<SubredditDistribution> for BTreeMap<String, f64> {
    fn from(d: SubredditDistribution) -> Self {
        d.0
    }
}

/// Per-community posting probabilities of `user`.
///
/// With `ignore_mh_for_diagnosed`, a diagnosed user's posts in mental-health
/// communities are not counted.
pub fn subreddit_distribution(
    user: &UserRecord,
    filter: &MentalHealthFilter,
    ignore_mh_for_diagnosed: bool,
) -> Result<SubredditDistribution> {
    let skip_mh = ignore_mh_for_diagnosed && user.label == UserLabel::Diagnosed;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in &user.posts {
        if skip_mh && filter.is_mh_community(&p.community) {
            continue;
        }
        *counts.entry(p.community.clone()).or_default() += 1;
    }
    SubredditDistribution::from_counts(&counts)
        .map_err(|_| Error::Data(format!("user {} has no counted posts", user.user_id)))
}

/// Hellinger distance `(1/√2)·‖√P − √Q‖₂` over the union of supports.
pub fn hellinger(p: &SubredditDistribution, q: &SubredditDistribution) -> f64 {
    let mut sum = 0.0;
    let mut a = p.0.iter().peekable();
    let mut b = q.0.iter().peekable();
    loop {
        let (x, y) = match (a.peek(), b.peek()) {
            (None, None) => break,
            (Some(&(ka, &va)), Some(&(kb, &vb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    a.next();
                    (va, 0.0)
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                    (0.0, vb)
                }
                std::cmp::Ordering::Equal => {
                    a.next();
                    b.next();
                    (va, vb)
                }
            },
            (Some(&(_, &va)), None) => {
                a.next();
                (va, 0.0)
            }
            (None, Some(&(_, &vb))) => {
                b.next();
                (0.0, vb)
            }
        };
        let d = x.sqrt() - y.sqrt();
        sum += d * d;
    }
    (sum / 2.0).sqrt().clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Post;

    fn dist(pairs: &[(&str, f64)]) -> SubredditDistribution {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>()
            .try_into()
            .unwrap()
    }

    fn user(communities: &[&str], label: UserLabel) -> UserRecord {
        let posts = communities
            .iter()
            .enumerate()
            .map(|(i, c)| Post::new(format!("p{i}"), "u", *c, i as i64, "x"))
            .collect();
        let diag = (label == UserLabel::Diagnosed).then(|| "p0".to_string());
        UserRecord::new("u", posts, label, diag).unwrap()
    }

    #[test]
    fn distribution_from_posts() {
        let f = MentalHealthFilter::new(["depression"], Vec::<&str>::new());
        let d = subreddit_distribution(&user(&["A", "A", "B", "A"], UserLabel::Control), &f, true)
            .unwrap();
        assert_eq!(d, dist(&[("A", 0.75), ("B", 0.25)]));
        let d = subreddit_distribution(&user(&["A"], UserLabel::Control), &f, true).unwrap();
        assert_eq!(d, dist(&[("A", 1.0)]));
        let u = user(&["depression", "A", "depression", "A"], UserLabel::Diagnosed);
        assert_eq!(subreddit_distribution(&u, &f, true).unwrap(), dist(&[("A", 1.0)]));
        assert_eq!(subreddit_distribution(&u, &f, false).unwrap().support_len(), 2);
        let only_mh = user(&["depression"], UserLabel::Diagnosed);
        assert!(subreddit_distribution(&only_mh, &f, true).is_err());
    }

    #[test]
    fn invalid_distributions_rejected() {
        let bad: BTreeMap<String, f64> = [("a".to_string(), 0.5)].into();
        assert!(SubredditDistribution::try_from(bad).is_err());
        assert!(SubredditDistribution::try_from(BTreeMap::new()).is_err());
    }

    #[test]
    fn hellinger_reference_values() {
        let p = dist(&[("A", 1.0)]);
        let q = dist(&[("A", 0.5), ("B", 0.5)]);
        assert_eq!(hellinger(&p, &p), 0.0);
        assert_eq!(hellinger(&p, &dist(&[("B", 1.0)])), 1.0);
        // H² = 1 − √0.5
        let expected = (1.0 - 0.5f64.sqrt()).sqrt();
        assert!((hellinger(&p, &q) - expected).abs() < 1e-12);
        assert!((hellinger(&p, &q) - 0.541196).abs() < 1e-6);
    }
}
