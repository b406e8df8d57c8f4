//! Small synthetic datasets with known answers, used by tests, the
//! acceptance suite, and the browser demo.

use super::{Bag, Dataset};
use crate::numerics::RngStream;

/// `n` single-instance bags: class 0 holds `e_1`, class 1 holds `e_2`.
pub fn single_instance_separable(n: usize) -> Dataset {
    let bags = (0..n)
        .map(|i| {
            let label = i % 2;
            let mut x = vec![0.0; 2];
            x[label] = 1.0;
            Bag::from_rows(format!("s{i:03}"), label, &[x]).expect("non-empty")
        })
        .collect();
    Dataset::new("toy-single", bags, 2, 2).expect("consistent toy data")
}

/// A separable MIL problem: every positive bag (label 1) contains one
/// instance with feature 0 switched on, negative bags never do. The other
/// `dim - 1` features are random bits shared by both classes. Bag sizes are
/// uniform in `2..=5`.
pub fn separable_mil(n_bags: usize, dim: usize, seed: u64) -> Dataset {
    assert!(dim >= 2, "separable_mil needs at least two features");
    let mut rng = RngStream::new(seed, 0x70f);
    let bags = (0..n_bags)
        .map(|i| {
            let label = i % 2;
            let size = 2 + (rng.next_u64() % 4) as usize;
            let witness = (rng.next_u64() % size as u64) as usize;
            let rows: Vec<Vec<f64>> = (0..size)
                .map(|s| {
                    let mut x: Vec<f64> = (0..dim)
                        .map(|_| if rng.uniform() < 0.3 { 1.0 } else { 0.0 })
                        .collect();
                    x[0] = if label == 1 && s == witness { 1.0 } else { 0.0 };
                    x
                })
                .collect();
            Bag::from_rows(format!("m{i:03}"), label, &rows).expect("non-empty")
        })
        .collect();
    Dataset::new("toy-mil", bags, 2, dim).expect("consistent toy data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witness_only_in_positive_bags() {
        let ds = separable_mil(40, 6, 1);
        for bag in &ds.bags {
            let hits = bag.instances().column(0).iter().filter(|&&v| v == 1.0).count();
            assert_eq!(hits, bag.label);
            assert!((2..=5).contains(&bag.len()));
        }
        assert_eq!(ds, separable_mil(40, 6, 1));
    }
}
