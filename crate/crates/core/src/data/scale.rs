use serde::{Deserialize, Serialize};

use super::{Bag, Dataset};
use crate::error::{Error, Result};

/// Per-feature min-max scaling into `[0, 1]`.
///
/// Constant features map to 0. Values outside the fitted range are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit<'a>(bags: impl IntoIterator<Item = &'a Bag>) -> Result<Self> {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        let mut any = false;
        for bag in bags {
            if !any {
                min = vec![f64::INFINITY; bag.dim()];
                max = vec![f64::NEG_INFINITY; bag.dim()];
                any = true;
            }
            if bag.dim() != min.len() {
                return Err(Error::invalid("fit_scaler: bags of differing dimension"));
            }
            for row in bag.instances().rows() {
                for (i, &v) in row.iter().enumerate() {
                    min[i] = min[i].min(v);
                    max[i] = max[i].max(v);
                }
            }
        }
        if !any {
            return Err(Error::invalid("fit_scaler: no training bags"));
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    #[inline]
    fn scale_value(&self, i: usize, v: f64) -> f64 {
        let range = self.max[i] - self.min[i];
        if range > 0.0 {
            ((v - self.min[i]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn apply_bag(&self, bag: &Bag) -> Result<Bag> {
        if bag.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "scaler dimension {} != bag {} dimension {}",
                self.dim(),
                bag.id,
                bag.dim()
            )));
        }
        let mut out = bag.clone();
        for mut row in out.instances_mut().rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.scale_value(i, *v);
            }
        }
        Ok(out)
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.num_features != self.dim() {
            return Err(Error::invalid(format!(
                "scaler dimension {} != dataset dimension {}",
                self.dim(),
                dataset.num_features
            )));
        }
        let bags = dataset
            .bags
            .iter()
            .map(|b| self.apply_bag(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            name: dataset.name.clone(),
            bags,
            num_classes: dataset.num_classes,
            num_features: dataset.num_features,
        })
    }
}
