use std::collections::BTreeSet;

use crate::corpus::{words, Post, UserRecord};

/// Mental-health communities and terms; a post touching either is "offending".
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MentalHealthFilter {
    communities: BTreeSet<String>,
    terms: BTreeSet<String>,
}

impl MentalHealthFilter {
    pub fn new<C, T>(communities: C, terms: T) -> Self
    where
        C: IntoIterator,
        C::Item: AsRef<str>,
        T: IntoIterator,
        T::Item: AsRef<str>,
    {
        Self {
            communities: communities
                .into_iter()
                .map(|c| c.as_ref().trim().to_lowercase())
                .collect(),
            terms: terms
                .into_iter()
                .map(|t| t.as_ref().trim().to_lowercase())
                .collect(),
        }
    }

    pub fn is_mh_community(&self, community: &str) -> bool {
        self.communities.contains(&community.to_lowercase())
    }

    pub fn mentions_mh_term(&self, text: &str) -> bool {
        words(text).iter().any(|w| self.terms.contains(w))
    }

    pub fn is_offending(&self, post: &Post) -> bool {
        self.is_mh_community(&post.community) || self.mentions_mh_term(&post.text)
    }
}

/// Diagnosed users need at least `min_prior` posts strictly before the diagnosis post.
pub fn eligible_diagnosed(user: &UserRecord, diagnosis_post_id: &str, min_prior: usize) -> bool {
    let Some(diag) = user.post(diagnosis_post_id) else {
        return false;
    };
    user.posts
        .iter()
        .filter(|p| p.timestamp < diag.timestamp)
        .count()
        >= min_prior
}

/// Controls must never have posted in a mental-health community or used a mental-health term.
pub fn eligible_control(user: &UserRecord, filter: &MentalHealthFilter) -> bool {
    !user.posts.iter().any(|p| filter.is_offending(p))
}

/// Drops every offending post and the diagnosis post itself.
pub fn scrub_diagnosed_posts(user: &UserRecord, filter: &MentalHealthFilter) -> UserRecord {
    let diag = user.diagnosis_post_id.as_deref();
    let posts = user
        .posts
        .iter()
        .filter(|p| Some(p.post_id.as_str()) != diag && !filter.is_offending(p))
        .cloned()
        .collect();
    UserRecord {
        posts,
        ..user.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserLabel;

    fn filter() -> MentalHealthFilter {
        MentalHealthFilter::new(["depression", "Anxiety"], ["depressed", "therapy"])
    }

    fn user(posts: &[(&str, &str)], diagnosed: bool) -> UserRecord {
        let posts = posts
            .iter()
            .enumerate()
            .map(|(i, (c, t))| Post::new(format!("p{i}"), "u", *c, i as i64, *t))
            .collect();
        if diagnosed {
            UserRecord::new("u", posts, UserLabel::Diagnosed, Some("p0".into())).unwrap()
        } else {
            UserRecord::new("u", posts, UserLabel::Control, None).unwrap()
        }
    }

    #[test]
    fn diagnosed_eligibility_boundary() {
        let mk = |prior: usize| {
            let mut posts: Vec<(&str, &str)> = vec![("a", "x"); prior];
            posts.push(("a", "diagnosis"));
            let mut u = user(&posts, false);
            u.diagnosis_post_id = Some(format!("p{prior}"));
            u
        };
        assert!(eligible_diagnosed(&mk(100), "p100", 100));
        assert!(!eligible_diagnosed(&mk(99), "p99", 100));
        assert!(!eligible_diagnosed(&mk(0), "p0", 100));
        assert!(!eligible_diagnosed(&mk(3), "missing", 1));
    }

    #[test]
    fn control_eligibility() {
        assert!(!eligible_control(&user(&[("a", "hi"), ("depression", "hi")], false), &filter()));
        assert!(!eligible_control(&user(&[("a", "I was so depressed")], false), &filter()));
        assert!(!eligible_control(&user(&[("ANXIETY", "ok")], false), &filter()));
        assert!(eligible_control(&user(&[("a", "hello"), ("b", "depress")], false), &filter()));
    }

    #[test]
    fn scrub_counts_and_idempotence() {
        let mut posts = vec![("a", "diagnosed")];
        posts.extend([("a", "fine"); 6]);
        posts.extend([("depression", "x"); 3]);
        let u = user(&posts, true);
        assert_eq!(u.posts.len(), 10);
        let s = scrub_diagnosed_posts(&u, &filter());
        // 3 community posts plus the diagnosis post removed
        assert_eq!(s.posts.len(), 6);
        assert_eq!(scrub_diagnosed_posts(&s, &filter()), s);
    }

    #[test]
    fn scrub_without_offending_posts_drops_only_diagnosis_post() {
        let u = user(&[("a", "x"), ("b", "y")], true);
        let s = scrub_diagnosed_posts(&u, &filter());
        assert_eq!(s.posts.len(), 1);
        assert_eq!(s.posts[0].post_id, "p1");
    }

    #[test]
    fn scrub_everything() {
        let u = user(&[("a", "x"), ("depression", "y"), ("b", "therapy")], true);
        assert!(scrub_diagnosed_posts(&u, &filter()).posts.is_empty());
    }
}
