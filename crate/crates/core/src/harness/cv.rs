use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One cross-validation fold. Ids are positions in the dataset's bag list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Class-stratified k-fold split. Members of each class are shuffled with the
/// seeded RNG and dealt round-robin; the dealing position carries over from
/// one class to the next so fold sizes stay within one of each other.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "k = {k}, need at least 2 folds"
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    for (class, m) in members.iter().enumerate() {
        if !m.is_empty() && m.len() < k {
            return Err(Error::InvalidInput(format!(
                "class {class} has {} members, fewer than {k} folds",
                m.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut slot = 0;
    for m in members.iter_mut() {
        m.shuffle(&mut rng);
        for &i in m.iter() {
            test[slot % k].push(i);
            slot += 1;
        }
    }
    Ok(test
        .into_iter()
        .enumerate()
        .map(|(fold_id, mut test_ids)| {
            test_ids.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            test_ids.iter().for_each(|&i| in_test[i] = true);
            let train_ids = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            FoldSplit {
                fold_id,
                train_ids,
                test_ids,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use rand::Rng;

    fn per_class_counts(labels: &[usize], ids: &[usize], num_classes: usize) -> Vec<usize> {
        let mut c = vec![0; num_classes];
        for &i in ids {
            c[labels[i]] += 1;
        }
        c
    }

    #[test]
    fn exact_divisibility() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let folds = stratified_kfold(&labels, 5, 0).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(per_class_counts(&labels, &f.test_ids, 2), vec![1, 1]);
            assert_eq!(f.train_ids.len(), 8);
        }
    }

    #[test]
    fn skin_cohort_counts_stratify_within_one() {
        let counts = [104usize, 44, 194, 55, 122, 102];
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        assert_eq!(labels.len(), 621);
        let folds = stratified_kfold(&labels, 5, 17).unwrap();
        for f in &folds {
            let got = per_class_counts(&labels, &f.test_ids, 6);
            for (c, &n) in counts.iter().enumerate() {
                let share = n as f64 / 5.0;
                assert!(
                    (got[c] as f64 - share).abs() <= 1.0,
                    "class {c}: {} vs {share}",
                    got[c]
                );
            }
        }
    }

    #[test]
    fn folds_partition_random_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for trial in 0..50 {
            let n = rng.gen_range(25..120);
            let s = rng.gen_range(2..5);
            let mut labels: Vec<usize> = (0..n).map(|i| i % s).collect();
            labels.shuffle(&mut rng);
            let folds = stratified_kfold(&labels, 5, trial).unwrap();
            let mut union = BTreeSet::new();
            let mut total = 0;
            for f in &folds {
                let test: BTreeSet<usize> = f.test_ids.iter().copied().collect();
                let train: BTreeSet<usize> = f.train_ids.iter().copied().collect();
                assert!(test.is_disjoint(&train));
                assert_eq!(test.len() + train.len(), n);
                total += test.len();
                union.extend(test);
            }
            assert_eq!(total, n);
            assert_eq!(union, (0..n).collect());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        assert_eq!(
            stratified_kfold(&labels, 5, 3).unwrap(),
            stratified_kfold(&labels, 5, 3).unwrap()
        );
    }

    #[test]
    fn small_class_rejected() {
        assert!(stratified_kfold(&[0, 0, 0, 0, 0, 1, 1], 5, 0).is_err());
        assert!(stratified_kfold(&[0, 1], 1, 0).is_err());
    }
}
