//! Multiple-instance datasets: bags of feature vectors with one label each.

mod folds;
mod format;
mod scale;
pub mod toy;

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

pub use folds::{make_folds, validation_split, validation_split_indices, FoldPlan};
pub use format::{parse_mil_sparse, read_mil_file, serialize_mil_sparse};
pub use scale::FeatureScaler;

/// One labelled set of instances. Rows of `instances` are the vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub id: String,
    pub label: usize,
    instances: Array2<f64>,
}

impl Bag {
    pub fn new(id: impl Into<String>, label: usize, instances: Array2<f64>) -> Result<Self> {
        let id = id.into();
        if instances.nrows() == 0 {
            return Err(Error::invalid(format!("bag {id} has no instances")));
        }
        Ok(Self {
            id,
            label,
            instances,
        })
    }

    /// Builds a bag from row vectors, all of the same length.
    pub fn from_rows(id: impl Into<String>, label: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let id = id.into();
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid(format!("bag {id}: ragged instances")));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let instances = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(id, label, instances)
    }

    pub fn instances(&self) -> &Array2<f64> {
        &self.instances
    }

    pub(crate) fn instances_mut(&mut self) -> &mut Array2<f64> {
        &mut self.instances
    }

    pub fn instance(&self, s: usize) -> ArrayView1<'_, f64> {
        self.instances.row(s)
    }

    pub fn len(&self) -> usize {
        self.instances.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.instances.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub bags: Vec<Bag>,
    pub num_classes: usize,
    pub num_features: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        bags: Vec<Bag>,
        num_classes: usize,
        num_features: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(bags.len());
        for bag in &bags {
            if bag.label >= num_classes {
                return Err(Error::invalid(format!(
                    "bag {}: label {} >= class count {num_classes}",
                    bag.id, bag.label
                )));
            }
            if bag.dim() != num_features {
                return Err(Error::invalid(format!(
                    "bag {}: dimension {} != {num_features}",
                    bag.id,
                    bag.dim()
                )));
            }
            if !seen.insert(bag.id.as_str()) {
                return Err(Error::invalid(format!("duplicate bag id {}", bag.id)));
            }
        }
        Ok(Self {
            name: name.into(),
            bags,
            num_classes,
            num_features,
        })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.bags.iter().map(|b| b.label).collect()
    }

    pub fn num_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    /// Bag counts per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for bag in &self.bags {
            counts[bag.label] += 1;
        }
        counts
    }

    /// A new dataset holding clones of the bags at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            bags: indices.iter().map(|&i| self.bags[i].clone()).collect(),
            num_classes: self.num_classes,
            num_features: self.num_features,
        }
    }

    /// Replaces every bag by the output of `f`, which must produce bags of
    /// a common dimensionality.
    pub fn map_bags(&self, mut f: impl FnMut(&Bag) -> Bag) -> Result<Dataset> {
        let bags: Vec<Bag> = self.bags.iter().map(&mut f).collect();
        let dim = bags.first().map(Bag::dim).unwrap_or(self.num_features);
        Dataset::new(self.name.clone(), bags, self.num_classes, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bag_rejected() {
        assert!(Bag::new("x", 0, Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn dataset_checks_invariants() {
        let a = Bag::from_rows("a", 0, &[vec![0.0, 1.0]]).unwrap();
        let b = Bag::from_rows("b", 2, &[vec![0.0, 1.0]]).unwrap();
        assert!(Dataset::new("t", vec![a.clone(), b.clone()], 2, 2).is_err());
        assert!(Dataset::new("t", vec![a.clone(), a.clone()], 2, 2).is_err());
        assert!(Dataset::new("t", vec![a.clone()], 2, 3).is_err());
        let ds = Dataset::new("t", vec![a, b], 3, 2).unwrap();
        assert_eq!(ds.class_counts(), vec![1, 0, 1]);
    }
}
