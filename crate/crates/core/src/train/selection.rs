use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::corpus::UserRecord;
use crate::error::{Error, Result};
use crate::seed::{fnv1a64, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Earliest,
    Latest,
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "earliest" => Ok(Strategy::Earliest),
            "latest" => Ok(Strategy::Latest),
            "random" => Ok(Strategy::Random),
            _ => Err(Error::invalid(format!("unknown selection strategy {s:?}"))),
        }
    }
}

/// Which posts of a user feed the depression model, and how much of each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub n_post: usize,
    pub n_term: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    /// The random-sampling regime: 1500 posts of up to 100 terms.
    fn default() -> Self {
        Self {
            strategy: Strategy::Random,
            n_post: 1500,
            n_term: 100,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    /// The earliest-posts regime: first 400 posts of up to 100 terms.
    pub fn earliest() -> Self {
        Self {
            strategy: Strategy::Earliest,
            n_post: 400,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_post == 0 || self.n_term == 0 {
            return Err(Error::Config("n_post and n_term must be at least 1".into()));
        }
        Ok(())
    }
}

/// Indices (into the time-ordered post list) of the selected posts, ascending.
pub fn select_post_indices(user: &UserRecord, cfg: &SelectionConfig) -> Vec<usize> {
    let n = user.posts.len();
    let take = cfg.n_post.min(n);
    match cfg.strategy {
        Strategy::Earliest => (0..take).collect(),
        Strategy::Latest => (n - take..n).collect(),
        Strategy::Random => {
            let mut rng = SeedStream::new(cfg.seed)
                .child("select_posts")
                .index(fnv1a64(user.user_id.as_bytes()))
                .rng();
            let mut idx = sample(&mut rng, n, take).into_vec();
            idx.sort_unstable();
            idx
        }
    }
}

/// Token sequences of the selected posts, each cut to `n_term` tokens.
/// Posts must already be tokenized.
pub fn select_posts(user: &UserRecord, cfg: &SelectionConfig) -> Vec<Vec<u32>> {
    select_post_indices(user, cfg)
        .into_iter()
        .map(|i| {
            let t = &user.posts[i].tokens;
            t[..t.len().min(cfg.n_term)].to_vec()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Post, UserLabel};

    fn user(n: usize) -> UserRecord {
        let posts = (0..n)
            .map(|i| {
                let mut p = Post::new(format!("p{i}"), "u", "c", i as i64, "");
                p.tokens = vec![i as u32 + 2; 5];
                p
            })
            .collect();
        UserRecord::new("u", posts, UserLabel::Control, None).unwrap()
    }

    #[test]
    fn earliest_takes_everything_when_short() {
        let cfg = SelectionConfig::earliest();
        assert_eq!(select_post_indices(&user(10), &cfg), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn latest_takes_final_posts() {
        let cfg = SelectionConfig {
            strategy: Strategy::Latest,
            n_post: 2,
            ..Default::default()
        };
        assert_eq!(select_post_indices(&user(10), &cfg), vec![8, 9]);
    }

    #[test]
    fn random_is_seeded_and_time_ordered() {
        let cfg = SelectionConfig {
            n_post: 4,
            seed: 3,
            ..Default::default()
        };
        let u = user(30);
        let a = select_post_indices(&u, &cfg);
        assert_eq!(a, select_post_indices(&u, &cfg));
        assert_eq!(a.len(), 4);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        let other = SelectionConfig { seed: 4, ..cfg };
        assert_ne!(a, select_post_indices(&u, &other));
    }

    #[test]
    fn truncates_terms() {
        let cfg = SelectionConfig {
            strategy: Strategy::Earliest,
            n_post: 3,
            n_term: 2,
            seed: 0,
        };
        let sel = select_posts(&user(5), &cfg);
        assert_eq!(sel, vec![vec![2, 2], vec![3, 3], vec![4, 4]]);
    }
}
