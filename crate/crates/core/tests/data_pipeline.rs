use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use proptest::prelude::*;
use setrbm::data::{make_folds, parse_mil_sparse, read_mil_file, serialize_mil_sparse, validation_split, FeatureScaler};
use setrbm::{Bag, Dataset};

fn musk1_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/musk1.mil")
}

#[test]
fn musk1_shape_matches_a_line_count() {
    let text = std::fs::read_to_string(musk1_path()).unwrap();
    let mut ids = BTreeSet::new();
    let mut labels = BTreeSet::new();
    let mut instances = 0;
    let mut max_index = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with('!') && !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        ids.insert(parts.next().unwrap().to_string());
        labels.insert(parts.next().unwrap().to_string());
        for tok in parts {
            max_index = max_index.max(tok.split(':').next().unwrap().parse::<usize>().unwrap());
        }
        instances += 1;
    }
    let ds = read_mil_file(musk1_path()).unwrap();
    assert_eq!((ds.len(), ds.num_instances(), ds.num_features, ds.num_classes), (ids.len(), instances, 166, labels.len()));
    assert_eq!((ds.len(), ds.num_instances()), (92, 476));
    assert!(max_index <= 166);
}

#[test]
fn musk1_folds_and_validation_sizes() {
    let ds = read_mil_file(musk1_path()).unwrap();
    let plan = make_folds(&ds, 10, 5, 1).unwrap();
    for r in 0..5 {
        for f in 0..10 {
            let (_, test) = plan.split(r, f);
            assert!(test.len() == 9 || test.len() == 10);
        }
    }
    let (fit, val) = validation_split(&ds.bags, 0.2, 3).unwrap();
    assert_eq!((fit.len(), val.len()), (74, 18));
}

fn balanced(n: usize) -> Dataset {
    let bags = (0..n).map(|i| Bag::from_rows(format!("b{i}"), i % 2, &[vec![i as f64]]).unwrap()).collect();
    Dataset::new("balanced", bags, 2, 1).unwrap()
}

#[test]
fn hundred_balanced_bags_give_five_per_class_per_fold() {
    let ds = balanced(100);
    let plan = make_folds(&ds, 10, 1, 9).unwrap();
    let mut counts = BTreeMap::new();
    for (i, &f) in plan.assignments[0].iter().enumerate() {
        *counts.entry((f, ds.bags[i].label)).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 20);
    assert!(counts.values().all(|&c| c == 5));
}

#[test]
fn too_few_bags_per_class_is_rejected() {
    let ds = balanced(6);
    assert!(make_folds(&ds, 4, 1, 0).is_err());
    assert!(make_folds(&ds, 3, 1, 0).is_ok());
}

#[test]
fn scaler_clamps_test_values() {
    let train = [Bag::from_rows("a", 0, &[vec![0.0, 5.0], vec![4.0, 5.0]]).unwrap()];
    let s = FeatureScaler::fit(&train).unwrap();
    let test = Bag::from_rows("t", 0, &[vec![10.0, 5.0], vec![-1.0, 7.0], vec![2.0, 5.0]]).unwrap();
    let scaled = s.apply_bag(&test).unwrap();
    assert_eq!(scaled.instances().as_slice().unwrap(), &[1.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..6, 2usize..4).prop_flat_map(|(d, c)| {
        prop::collection::vec(
            (0..c, prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), -50.0f64..50.0], d), 1..4)),
            1..12,
        )
        .prop_map(move |raw| {
            let mut bags: Vec<Bag> = raw
                .into_iter()
                .enumerate()
                .map(|(i, (label, rows))| Bag::from_rows(format!("bag{i}"), label, &rows).unwrap())
                .collect();
            // Make sure the top class appears so C is recoverable from labels.
            bags[0].label = c - 1;
            Dataset::new("prop", bags, c, d).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(ds in dataset_strategy()) {
        let text = serialize_mil_sparse(&ds);
        let back = parse_mil_sparse(text.as_bytes(), "prop").unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(serialize_mil_sparse(&back), text);
    }

    #[test]
    fn scaling_is_idempotent_and_bounded(ds in dataset_strategy()) {
        let s = FeatureScaler::fit(&ds.bags).unwrap();
        let once = s.apply(&ds).unwrap();
        let twice = FeatureScaler::fit(&once.bags).unwrap().apply(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        for b in &once.bags {
            prop_assert!(b.instances().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn folds_partition_and_stratify(labels in prop::collection::vec(0usize..3, 12..60), k in 2usize..5, seed in any::<u64>()) {
        let bags: Vec<Bag> = labels.iter().enumerate().map(|(i, &y)| Bag::from_rows(format!("b{i}"), y, &[vec![0.0]]).unwrap()).collect();
        let classes = 1 + labels.iter().max().unwrap();
        let ds = Dataset::new("p", bags, classes, 1).unwrap();
        let per_class: Vec<usize> = (0..classes).map(|c| labels.iter().filter(|&&y| y == c).count()).collect();
        let plan = match make_folds(&ds, k, 2, seed) {
            Ok(p) => p,
            Err(_) => {
                prop_assert!(per_class.iter().any(|&n| n > 0 && n < k) || per_class.iter().any(|&n| n == 0));
                return Ok(());
            }
        };
        prop_assert_eq!(&plan, &make_folds(&ds, k, 2, seed).unwrap());
        for r in 0..2 {
            let mut seen = vec![0; ds.len()];
            for f in 0..k {
                let (train, test) = plan.split(r, f);
                prop_assert_eq!(train.len() + test.len(), ds.len());
                for i in test {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&n| n == 1));
            for c in 0..classes {
                let sizes: Vec<usize> = (0..k)
                    .map(|f| plan.assignments[r].iter().enumerate().filter(|&(i, &a)| a == f && labels[i] == c).count())
                    .collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }

    #[test]
    fn validation_split_is_a_stratified_partition(labels in prop::collection::vec(0usize..2, 10..40), seed in any::<u64>()) {
        let bags: Vec<Bag> = labels.iter().enumerate().map(|(i, &y)| Bag::from_rows(format!("b{i}"), y, &[vec![1.0]]).unwrap()).collect();
        if let Ok((fit, val)) = validation_split(&bags, 0.2, seed) {
            prop_assert_eq!(val.len(), (0.2 * bags.len() as f64).round() as usize);
            let mut ids: Vec<String> = fit.iter().chain(&val).map(|b| b.id.clone()).collect();
            ids.sort();
            let mut all: Vec<String> = bags.iter().map(|b| b.id.clone()).collect();
            all.sort();
            prop_assert_eq!(ids, all);
            for c in 0..2 {
                let total = labels.iter().filter(|&&y| y == c).count();
                if total > 0 {
                    prop_assert!(fit.iter().any(|b| b.label == c));
                }
            }
        }
    }
}
