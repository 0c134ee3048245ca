use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    pub community: String,
    pub timestamp: i64,
    pub text: String,
    /// Vocabulary ids; populated by [`Post::tokenize_with`], never serialized.
    #[serde(skip)]
    pub tokens: Vec<u32>,
}

impl Post {
    pub fn new(
        post_id: impl Into<String>,
        user_id: impl Into<String>,
        community: impl Into<String>,
        timestamp: i64,
        text: impl Into<String>,
    ) -> Self {
        Self {
            post_id: post_id.into(),
            user_id: user_id.into(),
            community: community.into(),
            timestamp,
            text: text.into(),
            tokens: Vec::new(),
        }
    }

    pub fn tokenize_with(&mut self, vocab: &super::Vocabulary) {
        self.tokens = super::tokenize(&self.text, vocab);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserLabel {
    Control,
    Diagnosed,
}

impl UserLabel {
    pub fn index(self) -> usize {
        match self {
            UserLabel::Control => 0,
            UserLabel::Diagnosed => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(UserLabel::Control),
            1 => Some(UserLabel::Diagnosed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub user_id: String,
    pub posts: Vec<Post>,
    pub label: UserLabel,
    pub diagnosis_post_id: Option<String>,
}

impl UserRecord {
    /// Builds a record, sorting posts by `(timestamp, post_id)`.
    pub fn new(
        user_id: impl Into<String>,
        mut posts: Vec<Post>,
        label: UserLabel,
        diagnosis_post_id: Option<String>,
    ) -> Result<Self> {
        let user_id = user_id.into();
        match (label, &diagnosis_post_id) {
            (UserLabel::Diagnosed, None) => {
                return Err(Error::Data(format!(
                    "diagnosed user {user_id} has no diagnosis_post_id"
                )))
            }
            (UserLabel::Control, Some(_)) => {
                return Err(Error::Data(format!(
                    "control user {user_id} carries a diagnosis_post_id"
                )))
            }
            _ => {}
        }
        sort_posts(&mut posts);
        Ok(Self {
            user_id,
            posts,
            label,
            diagnosis_post_id,
        })
    }

    pub fn post(&self, post_id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.post_id == post_id)
    }

    pub fn tokenize_with(&mut self, vocab: &super::Vocabulary) {
        for p in &mut self.posts {
            p.tokenize_with(vocab);
        }
    }
}

pub(crate) fn sort_posts(posts: &mut [Post]) {
    posts.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.post_id.cmp(&b.post_id))
    });
}

/// Ordinal self-harm risk severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLabel {
    Green = 0,
    Amber = 1,
    Red = 2,
    Crisis = 3,
}

impl RiskLabel {
    pub const ALL: [RiskLabel; 4] = [
        RiskLabel::Green,
        RiskLabel::Amber,
        RiskLabel::Red,
        RiskLabel::Crisis,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RiskLabel::Green => "green",
            RiskLabel::Amber => "amber",
            RiskLabel::Red => "red",
            RiskLabel::Crisis => "crisis",
        }
    }
}

impl fmt::Display for RiskLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RiskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown risk label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadInstance {
    pub target: Post,
    /// Earlier posts of the same thread, oldest first.
    #[serde(default)]
    pub context: Vec<Post>,
    /// Absent on unlabeled prediction inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<RiskLabel>,
}

impl ThreadInstance {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self
            .context
            .iter()
            .find(|p| p.timestamp >= self.target.timestamp)
        {
            return Err(Error::Data(format!(
                "context post {} is not earlier than target {}",
                p.post_id, self.target.post_id
            )));
        }
        if self
            .context
            .windows(2)
            .any(|w| w[0].timestamp > w[1].timestamp)
        {
            return Err(Error::Data(format!(
                "context of {} is not time-ordered",
                self.target.post_id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn risk_labels_are_totally_ordered() {
        assert!(RiskLabel::Green < RiskLabel::Amber);
        assert!(RiskLabel::Amber < RiskLabel::Red);
        assert!(RiskLabel::Red < RiskLabel::Crisis);
        for l in RiskLabel::ALL {
            assert_eq!(RiskLabel::from_index(l.index()), Some(l));
            assert_eq!(l.name().parse::<RiskLabel>().unwrap(), l);
        }
        assert!(RiskLabel::from_index(4).is_none());
    }

    #[test]
    fn user_record_enforces_diagnosis_invariant() {
        assert!(UserRecord::new("u", vec![], UserLabel::Diagnosed, None).is_err());
        assert!(UserRecord::new("u", vec![], UserLabel::Control, Some("p".into())).is_err());
        let posts = vec![Post::new("b", "u", "c", 5, ""), Post::new("a", "u", "c", 1, "")];
        let u = UserRecord::new("u", posts, UserLabel::Control, None).unwrap();
        assert_eq!(u.posts[0].post_id, "a");
    }

    #[test]
    fn thread_context_must_precede_target() {
        let t = ThreadInstance {
            target: Post::new("t", "u", "f", 10, "x"),
            context: vec![Post::new("c", "v", "f", 10, "y")],
            label: Some(RiskLabel::Red),
        };
        assert!(t.validate().is_err());
    }
}
