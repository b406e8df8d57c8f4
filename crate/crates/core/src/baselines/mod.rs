//! Comparison systems: input pooling, max-output instance classifiers, and
//! set-kernel SVMs.

mod gram;
mod kernels;
mod maxout;
mod svm;

pub use gram::{read_gram, write_gram, GramHeader};
pub use kernels::{gram_matrix, cross_kernel, max_kernel, migraph_kernel, migraph_weights, KernelKind, KernelSpec, SigmaMode};
pub use maxout::{MaxOutKind, MaxOutModel, MaxOutNet};
pub use svm::{svm_predict, svm_train, SvmClassifier, SvmModel, KKT_TOLERANCE};

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Bag;
use crate::error::{Error, Result};
use crate::model::BagClassifier;

/// `[per-feature max | per-feature min | per-feature mean]` over the bag.
pub fn pool_bag(bag: &Bag) -> Array1<f64> {
    let x = bag.instances();
    let d = bag.dim();
    let mut out = Array1::zeros(3 * d);
    for i in 0..d {
        let col = x.column(i);
        out[i] = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        out[d + i] = col.fold(f64::INFINITY, |m, &v| m.min(v));
    }
    let mean = x.mean_axis(Axis(0)).expect("bags are non-empty");
    out.slice_mut(ndarray::s![2 * d..]).assign(&mean);
    out
}

/// The bag replaced by its single pooled vector.
pub fn pooled_bag(bag: &Bag) -> Bag {
    let v = pool_bag(bag);
    let n = v.len();
    Bag::new(bag.id.clone(), bag.label, v.into_shape_with_order((1, n)).expect("row vector"))
        .expect("non-empty")
}

/// Predicts class frequencies of the training bags; the most frequent class
/// (lowest index on ties) wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityModel {
    pub frequencies: Vec<f64>,
}

impl MajorityModel {
    pub fn fit(bags: &[Bag], classes: usize) -> Result<Self> {
        if bags.is_empty() {
            return Err(Error::invalid("majority model needs training bags"));
        }
        let mut counts = vec![0.0; classes];
        for bag in bags {
            *counts
                .get_mut(bag.label)
                .ok_or_else(|| Error::invalid(format!("label {} outside {classes} classes", bag.label)))? += 1.0;
        }
        let n = bags.len() as f64;
        Ok(Self { frequencies: counts.into_iter().map(|c| c / n).collect() })
    }
}

impl BagClassifier for MajorityModel {
    fn num_classes(&self) -> usize {
        self.frequencies.len()
    }

    fn posterior(&self, _bag: &Bag) -> Result<Vec<f64>> {
        Ok(self.frequencies.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pool_examples() {
        let bag = Bag::from_rows("a", 0, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(pool_bag(&bag).to_vec(), vec![1.0, 1.0, 0.0, 0.0, 0.5, 0.5]);
        let single = Bag::from_rows("s", 0, &[vec![0.3, -2.0]]).unwrap();
        assert_eq!(pool_bag(&single).to_vec(), vec![0.3, -2.0, 0.3, -2.0, 0.3, -2.0]);
        let pooled = pooled_bag(&bag);
        assert_eq!((pooled.len(), pooled.dim()), (1, 6));
    }

    #[test]
    fn majority_predicts_most_frequent() {
        let bags: Vec<Bag> = [1, 0, 1, 1, 0]
            .iter()
            .enumerate()
            .map(|(i, &y)| Bag::from_rows(format!("b{i}"), y, &[vec![0.0]]).unwrap())
            .collect();
        let m = MajorityModel::fit(&bags, 2).unwrap();
        assert_eq!(m.predict(&bags[0]).unwrap(), 1);
        assert_eq!(m.frequencies, vec![0.4, 0.6]);
        assert!(MajorityModel::fit(&[], 2).is_err());
    }

    proptest! {
        #[test]
        fn pool_permutation_invariant(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6), seed in any::<u64>()) {
            let bag = Bag::from_rows("p", 0, &rows).unwrap();
            let mut perm = rows.clone();
            crate::numerics::RngStream::new(seed, 0).shuffle(&mut perm);
            let other = Bag::from_rows("p", 0, &perm).unwrap();
            let (a, b) = (pool_bag(&bag), pool_bag(&other));
            for (u, v) in a.iter().zip(b.iter()) {
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
    }
}
