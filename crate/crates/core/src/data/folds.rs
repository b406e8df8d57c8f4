//! Stratified repeated k-fold plans and stratified validation splits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Bag, Dataset};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Fold assignment for every bag in every repeat.
///
/// `assignments[r][i]` is the test fold of `dataset.bags[i]` in repeat `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub bag_ids: Vec<String>,
    pub assignments: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// `(train indices, test indices)` for one repeat and fold, both
    /// ascending.
    pub fn split(&self, repeat: usize, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.assignments[repeat].iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_of(&self, repeat: usize, bag_id: &str) -> Option<usize> {
        let pos = self.bag_ids.iter().position(|id| id == bag_id)?;
        Some(self.assignments[repeat][pos])
    }

    /// Bag id → fold map for one repeat.
    pub fn assignment_map(&self, repeat: usize) -> BTreeMap<&str, usize> {
        self.bag_ids
            .iter()
            .map(String::as_str)
            .zip(self.assignments[repeat].iter().copied())
            .collect()
    }
}

fn indices_by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    by_class
}

/// Stratified assignment: within each class the bags are shuffled and dealt
/// round-robin, and the dealing position carries over from one class to the
/// next so that total fold sizes also differ by at most one.
pub fn make_folds(dataset: &Dataset, k: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("make_folds: k = {k} < 2")));
    }
    if repeats == 0 {
        return Err(Error::invalid("make_folds: repeats must be >= 1"));
    }
    let labels = dataset.labels();
    let by_class = indices_by_class(&labels);
    if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::invalid(format!(
            "make_folds: class {class} has {} bags, fewer than k = {k}",
            members.len()
        )));
    }

    let root = RngStream::new(seed, 0);
    let assignments = (0..repeats)
        .map(|r| {
            let mut rng = root.derive(r as u64);
            let mut assignment = vec![0usize; labels.len()];
            let mut next = 0usize;
            for members in by_class.values() {
                let mut members = members.clone();
                rng.shuffle(&mut members);
                for i in members {
                    assignment[i] = next;
                    next = (next + 1) % k;
                }
            }
            assignment
        })
        .collect();

    Ok(FoldPlan {
        k,
        repeats,
        seed,
        bag_ids: dataset.bags.iter().map(|b| b.id.clone()).collect(),
        assignments,
    })
}

/// Stratified split of positions `0..labels.len()` into (fit, validation).
///
/// The validation set has `round(fraction * n)` members, apportioned across
/// classes by largest remainder.
pub fn validation_split_indices(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("validation fraction {fraction} not in (0, 1)")));
    }
    let n = labels.len();
    let target = (fraction * n as f64).round() as usize;
    if target == 0 {
        return Err(Error::invalid(format!(
            "validation split of {n} bags at fraction {fraction} is empty"
        )));
    }
    let by_class = indices_by_class(labels);

    let mut quotas: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&c, m)| {
            let exact = fraction * m.len() as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &q in order.iter().cycle().take(target.saturating_sub(assigned)) {
        quotas[q].1 += 1;
    }

    let mut rng = RngStream::new(seed, 0x5a11d);
    let mut fit = Vec::with_capacity(n - target);
    let mut val = Vec::with_capacity(target);
    for (&(class, quota, _), members) in quotas.iter().zip(by_class.values()) {
        if quota >= members.len() {
            return Err(Error::invalid(format!(
                "validation split leaves class {class} without fit bags"
            )));
        }
        let mut members = members.clone();
        rng.shuffle(&mut members);
        val.extend_from_slice(&members[..quota]);
        fit.extend_from_slice(&members[quota..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    Ok((fit, val))
}

pub fn validation_split(bags: &[Bag], fraction: f64, seed: u64) -> Result<(Vec<Bag>, Vec<Bag>)> {
    let labels: Vec<usize> = bags.iter().map(|b| b.label).collect();
    let (fit, val) = validation_split_indices(&labels, fraction, seed)?;
    Ok((
        fit.into_iter().map(|i| bags[i].clone()).collect(),
        val.into_iter().map(|i| bags[i].clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dataset(counts: &[usize]) -> Dataset {
        let mut bags = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for i in 0..n {
                bags.push(Bag::from_rows(format!("c{label}-{i}"), label, &[vec![0.0]]).unwrap());
            }
        }
        Dataset::new("t", bags, counts.len(), 1).unwrap()
    }

    fn fold_sizes(plan: &FoldPlan, repeat: usize) -> Vec<usize> {
        let mut sizes = vec![0; plan.k];
        for &f in &plan.assignments[repeat] {
            sizes[f] += 1;
        }
        sizes
    }

    #[test]
    fn musk_sized_folds() {
        let ds = dataset(&[45, 47]);
        let plan = make_folds(&ds, 10, 5, 1).unwrap();
        for r in 0..5 {
            assert!(fold_sizes(&plan, r).iter().all(|&s| s == 9 || s == 10));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let ds = dataset(&[13, 20]);
        assert_eq!(make_folds(&ds, 5, 3, 9).unwrap(), make_folds(&ds, 5, 3, 9).unwrap());
        assert_ne!(make_folds(&ds, 5, 3, 9).unwrap(), make_folds(&ds, 5, 3, 10).unwrap());
    }

    #[test]
    fn balanced_classes_give_equal_folds() {
        let ds = dataset(&[50, 50]);
        let plan = make_folds(&ds, 10, 1, 4).unwrap();
        let labels = ds.labels();
        for fold in 0..10 {
            let (_, test) = plan.split(0, fold);
            let pos = test.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!((test.len() - pos, pos), (5, 5));
        }
    }

    #[test]
    fn too_few_bags_per_class() {
        assert!(make_folds(&dataset(&[9, 30]), 10, 1, 0).is_err());
        assert!(make_folds(&dataset(&[10, 10]), 1, 1, 0).is_err());
    }

    #[test]
    fn validation_sizes() {
        let ds = dataset(&[5, 5]);
        let (fit, val) = validation_split(&ds.bags, 0.2, 3).unwrap();
        assert_eq!((fit.len(), val.len()), (8, 2));
        let ds = dataset(&[45, 47]);
        let (fit, val) = validation_split(&ds.bags, 0.2, 3).unwrap();
        assert_eq!((fit.len(), val.len()), (74, 18));
    }

    #[test]
    fn validation_rejects_emptied_class() {
        assert!(validation_split_indices(&[0, 1, 1, 1], 0.5, 0).is_err());
        assert!(validation_split_indices(&[0, 1], 0.0, 0).is_err());
        assert!(validation_split_indices(&[0, 1], 1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_every_repeat(a in 3usize..30, b in 3usize..30, k in 2usize..4, seed: u64) {
            let ds = dataset(&[a, b]);
            let plan = make_folds(&ds, k, 2, seed).unwrap();
            for r in 0..2 {
                let mut seen = vec![0; ds.len()];
                for fold in 0..k {
                    let (train, test) = plan.split(r, fold);
                    prop_assert_eq!(train.len() + test.len(), ds.len());
                    for i in test { seen[i] += 1; }
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
                let sizes = fold_sizes(&plan, r);
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }

        #[test]
        fn validation_is_disjoint_cover(a in 2usize..40, b in 2usize..40, seed: u64) {
            let ds = dataset(&[a, b]);
            let (fit, val) = validation_split_indices(&ds.labels(), 0.2, seed).unwrap();
            prop_assert_eq!(val.len(), (0.2 * (a + b) as f64).round() as usize);
            let mut all: Vec<usize> = fit.iter().chain(val.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..a + b).collect::<Vec<_>>());
        }
    }
}
