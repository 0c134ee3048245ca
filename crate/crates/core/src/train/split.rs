use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Holds out `fraction` of every class (rounded, at least one when the class
/// has two or more members). Returns `(kept, held_out)` index lists, ascending.
pub fn stratified_holdout<R: Rng>(labels: &[usize], fraction: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!("holdout fraction {fraction} outside [0, 1)")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut kept = Vec::new();
    let mut held = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let mut n = (members.len() as f64 * fraction).round() as usize;
        if fraction > 0.0 && n == 0 && members.len() >= 2 {
            n = 1;
        }
        held.extend_from_slice(&members[..n]);
        kept.extend_from_slice(&members[n..]);
    }
    kept.sort_unstable();
    held.sort_unstable();
    Ok((kept, held))
}

/// `k` shuffled folds of `0..n` with sizes differing by at most one.
pub fn kfold<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot split {n} items into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut folds = vec![Vec::new(); k];
    for (i, v) in idx.into_iter().enumerate() {
        folds[i % k].push(v);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Errors if any id appears in more than one split.
pub fn ensure_disjoint<'a>(splits: &[(&str, Vec<&'a str>)]) -> Result<()> {
    let mut seen: HashSet<&'a str> = HashSet::new();
    for (name, ids) in splits {
        let own: HashSet<&str> = ids.iter().copied().collect();
        if let Some(dup) = own.iter().find(|id| seen.contains(*id)) {
            return Err(Error::Data(format!("{dup} appears in {name} and an earlier split")));
        }
        seen.extend(own);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;

    #[test]
    fn holdout_is_stratified() {
        let labels: Vec<usize> = (0..200).map(|i| usize::from(i % 4 == 0)).collect();
        let mut rng = SeedStream::new(2).rng();
        let (kept, held) = stratified_holdout(&labels, 0.15, &mut rng).unwrap();
        assert_eq!(kept.len() + held.len(), 200);
        assert_eq!(held.iter().filter(|&&i| labels[i] == 1).count(), 8);
        assert_eq!(held.iter().filter(|&&i| labels[i] == 0).count(), 23);
    }

    #[test]
    fn folds_partition() {
        let mut rng = SeedStream::new(2).rng();
        let folds = kfold(23, 10, &mut rng).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 2 || f.len() == 3));
        assert!(kfold(3, 4, &mut rng).is_err());
    }

    #[test]
    fn disjoint_check() {
        assert!(ensure_disjoint(&[("train", vec!["a", "b"]), ("test", vec!["c"])]).is_ok());
        assert!(ensure_disjoint(&[("train", vec!["a", "b"]), ("test", vec!["b"])]).is_err());
    }
}
