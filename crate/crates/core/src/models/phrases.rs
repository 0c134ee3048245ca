//! Ranks convolution windows by how strongly they push a user toward the
//! diagnosed class.

use serde::{Deserialize, Serialize};

use super::depression::DepressionModel;
use crate::corpus::{words, UserLabel, UserRecord};
use crate::error::Result;
use crate::nn::Mode;
use crate::seed::SeedStream;
use crate::train::{select_post_indices, SelectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phrase {
    pub user_id: String,
    pub post_id: String,
    pub window: String,
    pub score: f64,
}

/// Best-scoring window of one user, if any post is long enough to convolve.
///
/// A window's score is `max_f relu(a_f) · ∂z/∂v_f` where `a_f` is filter
/// `f`'s response to the window, `v` the post vector and `z` the diagnosed logit.
pub fn best_window(model: &DepressionModel, user: &UserRecord, selection: &SelectionConfig) -> Result<Option<Phrase>> {
    let indices = select_post_indices(user, selection);
    let posts = model.prepare_user(user, selection);
    if posts.is_empty() {
        return Ok(None);
    }
    let mut rng = SeedStream::new(0).rng();
    let fwd = model.forward(&posts, Mode::Eval, &mut rng, true)?;
    let mut grad_logits = vec![0.0; 2];
    grad_logits[UserLabel::Diagnosed.index()] = 1.0;
    let (g_posts, traces) = model.post_vector_gradients(&fwd, &grad_logits)?;
    let k = model.config.post_conv.window;
    let mut best: Option<(f64, usize, usize)> = None;
    for (p, trace) in traces.iter().enumerate() {
        let Some((_, pre)) = trace else { continue };
        let g = g_posts.row(p);
        for r in 0..pre.rows() {
            let score = pre
                .row(r)
                .iter()
                .zip(g)
                .map(|(a, g)| a.max(0.0) * g)
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_none_or(|(s, _, _)| score > s) {
                best = Some((score, p, r));
            }
        }
    }
    Ok(best.map(|(score, p, r)| {
        let post = &user.posts[indices[p]];
        let w = words(&post.text);
        let stride = model.config.post_conv.stride;
        Phrase {
            user_id: user.user_id.clone(),
            post_id: post.post_id.clone(),
            window: w[r * stride..(r * stride + k).min(w.len())].join(" "),
            score,
        }
    }))
}

/// Top `m` windows over `users`, at most one per user, highest score first.
pub fn top_phrases(model: &DepressionModel, users: &[UserRecord], selection: &SelectionConfig, m: usize) -> Result<Vec<Phrase>> {
    let mut found = Vec::new();
    for u in users {
        if let Some(p) = best_window(model, u, selection)? {
            found.push(p);
        }
    }
    found.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.user_id.cmp(&b.user_id)));
    found.truncate(m);
    Ok(found)
}
