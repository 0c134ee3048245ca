//! Line-delimited JSON corpus files.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::types::{Post, ThreadInstance, UserLabel, UserRecord};
use crate::error::{Error, Result};

/// One row of a user label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLabelRow {
    pub user_id: String,
    pub label: UserLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis_post_id: Option<String>,
}

/// Streams `path` one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T, I>(path: &Path, rows: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_posts(path: &Path) -> Result<Vec<Post>> {
    let posts: Vec<Post> = read_jsonl(path)?;
    let mut seen = HashSet::with_capacity(posts.len());
    for p in &posts {
        if !seen.insert(p.post_id.as_str()) {
            return Err(Error::Data(format!(
                "{}: duplicate post_id {}",
                path.display(),
                p.post_id
            )));
        }
    }
    Ok(posts)
}

/// Groups posts by user, keyed and ordered by user id.
pub fn group_by_user(posts: Vec<Post>) -> BTreeMap<String, Vec<Post>> {
    let mut by_user: BTreeMap<String, Vec<Post>> = BTreeMap::new();
    for p in posts {
        by_user.entry(p.user_id.clone()).or_default().push(p);
    }
    for posts in by_user.values_mut() {
        super::types::sort_posts(posts);
    }
    by_user
}

/// Joins a post file and a label file. Users are returned in user-id order;
/// posts of unlabeled users are ignored.
pub fn load_users(posts_path: &Path, labels_path: &Path) -> Result<Vec<UserRecord>> {
    let mut by_user = group_by_user(read_posts(posts_path)?);
    let labels: Vec<UserLabelRow> = read_jsonl(labels_path)?;
    let mut users = Vec::with_capacity(labels.len());
    let mut seen = HashSet::new();
    for row in labels {
        if !seen.insert(row.user_id.clone()) {
            return Err(Error::Data(format!(
                "{}: duplicate user {}",
                labels_path.display(),
                row.user_id
            )));
        }
        let posts = by_user.remove(&row.user_id).unwrap_or_default();
        users.push(UserRecord::new(
            row.user_id,
            posts,
            row.label,
            row.diagnosis_post_id,
        )?);
    }
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    Ok(users)
}

/// Writes `posts.jsonl` and `users.jsonl` into `dir`.
pub fn write_users(dir: &Path, users: &[UserRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl(&dir.join("posts.jsonl"), users.iter().flat_map(|u| &u.posts))?;
    let labels: Vec<UserLabelRow> = users
        .iter()
        .map(|u| UserLabelRow {
            user_id: u.user_id.clone(),
            label: u.label,
            diagnosis_post_id: u.diagnosis_post_id.clone(),
        })
        .collect();
    write_jsonl(&dir.join("users.jsonl"), &labels)
}

pub fn load_user_dir(dir: &Path) -> Result<Vec<UserRecord>> {
    load_users(&dir.join("posts.jsonl"), &dir.join("users.jsonl"))
}

pub fn read_threads(path: &Path) -> Result<Vec<ThreadInstance>> {
    let threads: Vec<ThreadInstance> = read_jsonl(path)?;
    for t in &threads {
        t.validate()?;
    }
    Ok(threads)
}
