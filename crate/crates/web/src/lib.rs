//! A small 2-D multiple-instance problem driven from a web page.
//!
//! Positive bags hide one point in the corner of the unit square beyond the
//! line `x + y = WITNESS`; every other point lies below `x + y = CLEAR`. The page trains one of
//! the four set models on these bags, plots the validation curve, paints the
//! posterior of a one-point bag over the square, lets the user build a bag
//! by clicking, and draws the rejection curve on held-out bags.

use std::str::FromStr;

use setrbm::data::validation_split;
use setrbm::evaluator::rejection_curve;
use setrbm::model::{BagClassifier, ModelVariant, RbmModel};
use setrbm::{Bag, ModelSpec, RngStream, TrainConfig};
use wasm_bindgen::prelude::*;

pub const WITNESS: f64 = 1.45;
pub const CLEAR: f64 = 1.25;

fn point_where(rng: &mut RngStream, keep: impl Fn(f64) -> bool) -> [f64; 2] {
    loop {
        let p = [rng.uniform(), rng.uniform()];
        if keep(p[0] + p[1]) {
            return p;
        }
    }
}

/// `n` bags of 2 to 6 points, alternating labels 0 and 1.
pub fn corner_bags(n: usize, prefix: &str, rng: &mut RngStream) -> Vec<Bag> {
    (0..n)
        .map(|i| {
            let label = i % 2;
            let size = 2 + (rng.next_u64() % 5) as usize;
            let mut rows: Vec<Vec<f64>> = (0..size).map(|_| point_where(rng, |t| t < CLEAR).to_vec()).collect();
            if label == 1 {
                let s = (rng.next_u64() % size as u64) as usize;
                rows[s] = point_where(rng, |t| t > WITNESS).to_vec();
            }
            Bag::from_rows(format!("{prefix}{i}"), label, &rows).expect("non-empty bag")
        })
        .collect()
}

fn to_rows(points: &[f64]) -> Result<Vec<Vec<f64>>, String> {
    if points.is_empty() || !points.len().is_multiple_of(2) {
        return Err(format!("expected x,y pairs, got {} numbers", points.len()));
    }
    Ok(points.chunks(2).map(<[f64]>::to_vec).collect())
}

#[wasm_bindgen]
pub struct Demo {
    train: Vec<Bag>,
    test: Vec<Bag>,
    model: Option<RbmModel>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, bags: usize) -> Demo {
        let mut rng = RngStream::new(seed, 0xde70);
        let train = corner_bags(bags.max(10), "tr", &mut rng);
        let test = corner_bags(bags.max(10), "te", &mut rng);
        Demo { train, test, model: None }
    }

    pub fn bag_count(&self) -> usize {
        self.train.len()
    }

    pub fn bag_label(&self, i: usize) -> usize {
        self.train[i].label
    }

    /// Flat `x, y` pairs of training bag `i`.
    pub fn bag_points(&self, i: usize) -> Vec<f64> {
        self.train[i].instances().iter().copied().collect()
    }

    /// Trains `model` (one of the `set-*` names) and returns the validation
    /// accuracy after every epoch.
    pub fn train(&mut self, model: &str, hidden: usize, epochs: usize, rate: f64, seed: u64) -> Result<Vec<f64>, String> {
        let variant = match ModelSpec::from_str(model).map_err(|e| e.to_string())? {
            ModelSpec::Set(v) => ModelVariant::Set(v),
            other => return Err(format!("the demo trains set models only, not {other}")),
        };
        let config = TrainConfig { disc_rate: rate, hidden_units: hidden, max_epochs: epochs, patience: epochs, seed, ..Default::default() };
        let mut rng = RngStream::new(seed, 1);
        let (fit, val) = validation_split(&self.train, config.validation_fraction, rng.next_u64()).map_err(|e| e.to_string())?;
        let init = RbmModel::initialize(variant, 2, 2, &config, &mut rng);
        let (best, history) =
            setrbm::trainer::train_with_validation(init, &fit, &val, &config, &mut rng).map_err(|e| e.to_string())?;
        self.model = Some(best);
        Ok(history.validation_accuracy)
    }

    fn model(&self) -> Result<&RbmModel, String> {
        self.model.as_ref().ok_or_else(|| "train a model first".to_string())
    }

    pub fn test_accuracy(&self) -> Result<f64, String> {
        setrbm::trainer::accuracy(self.model()?, &self.test).map_err(|e| e.to_string())
    }

    /// Class posterior of the bag made of the given `x, y` pairs.
    pub fn posterior(&self, points: &[f64]) -> Result<Vec<f64>, String> {
        let bag = Bag::from_rows("user", 0, &to_rows(points)?).map_err(|e| e.to_string())?;
        self.model()?.posterior(&bag).map_err(|e| e.to_string())
    }

    /// `p(positive)` for one-point bags on a `resolution x resolution` grid
    /// over the unit square, row by row from the top.
    pub fn heatmap(&self, resolution: usize) -> Result<Vec<f64>, String> {
        let model = self.model()?;
        let n = resolution.max(2);
        let mut out = Vec::with_capacity(n * n);
        for row in 0..n {
            let y = 1.0 - (row as f64 + 0.5) / n as f64;
            for col in 0..n {
                let x = (col as f64 + 0.5) / n as f64;
                let bag = Bag::from_rows("cell", 0, &[vec![x, y]]).map_err(|e| e.to_string())?;
                out.push(model.posterior(&bag).map_err(|e| e.to_string())?[1]);
            }
        }
        Ok(out)
    }

    /// Flat `threshold, precision, recall` triples on the held-out bags.
    pub fn rejection_curve(&self) -> Result<Vec<f64>, String> {
        let model = self.model()?;
        let mut outcomes = Vec::with_capacity(self.test.len());
        for bag in &self.test {
            let (k, conf) = model.predict_with_confidence(bag).map_err(|e| e.to_string())?;
            outcomes.push((conf, k == bag.label));
        }
        let curve = rejection_curve(&outcomes).map_err(|e| e.to_string())?;
        Ok(curve.iter().flat_map(|p| [p.threshold, p.precision, p.recall]).collect())
    }
}
