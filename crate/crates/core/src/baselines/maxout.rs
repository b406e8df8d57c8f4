use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::class_rbm;
use crate::data::Bag;
use crate::error::{Error, Result};
use crate::model::{BagClassifier, SgdModel};
use crate::numerics::{raw, RngStream};
use crate::params::RbmParams;
use crate::trainer::{Objective, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxOutKind {
    Logit,
    Mlp,
    ClassRbm,
}

impl fmt::Display for MaxOutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaxOutKind::Logit => "logit",
            MaxOutKind::Mlp => "mlp",
            MaxOutKind::ClassRbm => "classrbm",
        })
    }
}

impl FromStr for MaxOutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(MaxOutKind::Logit),
            "mlp" => Ok(MaxOutKind::Mlp),
            "classrbm" => Ok(MaxOutKind::ClassRbm),
            other => Err(Error::invalid(format!("unknown max-output kind {other:?}"))),
        }
    }
}

/// Instance-level network scoring the probability of the positive class.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxOutNet {
    Logit { w: Array1<f64>, bias: f64 },
    /// Sigmoid hidden layer (`w1`: H×D) and a sigmoid output unit.
    Mlp { w1: Array2<f64>, b1: Array1<f64>, w2: Array1<f64>, b2: f64 },
    ClassRbm(RbmParams),
}

/// Classifies a bag by its highest-scoring instance. Binary tasks only;
/// class 1 is the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxOutModel {
    pub net: MaxOutNet,
}

impl MaxOutModel {
    /// Logit starts at zero; the MLP uses uniform `±1/sqrt(fan_in)` weights;
    /// the ClassRBM uses the usual RBM initialization.
    pub fn initialize(kind: MaxOutKind, inputs: usize, classes: usize, config: &TrainConfig, rng: &mut RngStream) -> Result<Self> {
        if classes != 2 {
            return Err(Error::UnsupportedTask(format!(
                "max-output models need a binary task, got {classes} classes"
            )));
        }
        let net = match kind {
            MaxOutKind::Logit => MaxOutNet::Logit { w: Array1::zeros(inputs), bias: 0.0 },
            MaxOutKind::Mlp => {
                let h = config.hidden_units;
                let r1 = 1.0 / (inputs.max(1) as f64).sqrt();
                let r2 = 1.0 / (h as f64).sqrt();
                let w1 = Array2::from_shape_simple_fn((h, inputs), || rng.uniform_range(-r1, r1));
                let w2 = Array1::from_shape_simple_fn(h, || rng.uniform_range(-r2, r2));
                MaxOutNet::Mlp { w1, b1: Array1::zeros(h), w2, b2: 0.0 }
            }
            MaxOutKind::ClassRbm => {
                MaxOutNet::ClassRbm(RbmParams::init(inputs, config.hidden_units, 2, config.init_scale, rng))
            }
        };
        Ok(Self { net })
    }

    pub fn kind(&self) -> MaxOutKind {
        match self.net {
            MaxOutNet::Logit { .. } => MaxOutKind::Logit,
            MaxOutNet::Mlp { .. } => MaxOutKind::Mlp,
            MaxOutNet::ClassRbm(_) => MaxOutKind::ClassRbm,
        }
    }

    pub fn inputs(&self) -> usize {
        match &self.net {
            MaxOutNet::Logit { w, .. } => w.len(),
            MaxOutNet::Mlp { w1, .. } => w1.ncols(),
            MaxOutNet::ClassRbm(p) => p.inputs(),
        }
    }

    fn check(&self, bag: &Bag) -> Result<()> {
        if bag.dim() != self.inputs() {
            return Err(Error::invalid(format!(
                "bag {} has dimension {}, model expects {}",
                bag.id,
                bag.dim(),
                self.inputs()
            )));
        }
        Ok(())
    }

    /// Positive-class probability of one instance.
    pub fn instance_score(&self, x: ArrayView1<f64>) -> f64 {
        match &self.net {
            MaxOutNet::Logit { w, bias } => raw::sigmoid(w.dot(&x) + bias),
            MaxOutNet::Mlp { w1, b1, w2, b2 } => {
                let hidden = (w1.dot(&x) + b1).mapv(raw::sigmoid);
                raw::sigmoid(w2.dot(&hidden) + b2)
            }
            MaxOutNet::ClassRbm(p) => {
                let pre = class_rbm::input_preactivation(p, x);
                class_rbm::posterior_from_pre(p, pre.as_slice().expect("contiguous"))[1]
            }
        }
    }

    /// `(index, score)` of the highest-scoring instance, lowest index on ties.
    pub fn best_instance(&self, bag: &Bag) -> Result<(usize, f64)> {
        self.check(bag)?;
        let scores: Vec<f64> = (0..bag.len()).map(|s| self.instance_score(bag.instance(s))).collect();
        let k = raw::argmax(&scores);
        Ok((k, scores[k]))
    }

    pub fn bag_score(&self, bag: &Bag) -> Result<f64> {
        Ok(self.best_instance(bag)?.1)
    }

    /// One cross-entropy gradient step on a single instance.
    fn instance_step(&mut self, x: ArrayView1<f64>, y: usize, rate: f64) -> Result<()> {
        let target = y as f64;
        match &mut self.net {
            MaxOutNet::Logit { w, bias } => {
                let err = raw::sigmoid(w.dot(&x) + *bias) - target;
                w.scaled_add(-rate * err, &x);
                *bias -= rate * err;
            }
            MaxOutNet::Mlp { w1, b1, w2, b2 } => {
                let hidden = (w1.dot(&x) + &*b1).mapv(raw::sigmoid);
                let err = raw::sigmoid(w2.dot(&hidden) + *b2) - target;
                let delta = (&*w2 * err) * hidden.mapv(|h| h * (1.0 - h));
                w2.scaled_add(-rate * err, &hidden);
                *b2 -= rate * err;
                for (j, mut row) in w1.rows_mut().into_iter().enumerate() {
                    row.scaled_add(-rate * delta[j], &x);
                }
                b1.scaled_add(-rate, &delta);
            }
            MaxOutNet::ClassRbm(p) => {
                let g = class_rbm::disc_gradient(p, x, y)?;
                p.add_scaled(-rate, &g);
            }
        }
        Ok(())
    }
}

impl BagClassifier for MaxOutModel {
    fn num_classes(&self) -> usize {
        2
    }

    /// `[1 - s, s]` with `s` the bag score, so the decision threshold is 0.5.
    fn posterior(&self, bag: &Bag) -> Result<Vec<f64>> {
        let s = self.bag_score(bag)?;
        Ok(vec![1.0 - s, s])
    }
}

impl SgdModel for MaxOutModel {
    fn sgd_step(&mut self, bag: &Bag, config: &TrainConfig, _rng: &mut RngStream) -> Result<()> {
        if config.objective != Objective::Discriminative {
            return Err(Error::invalid("max-output models train with the discriminative objective only"));
        }
        if bag.label > 1 {
            return Err(Error::UnsupportedTask(format!("bag {} has non-binary label {}", bag.id, bag.label)));
        }
        if config.disc_rate == 0.0 {
            return Ok(());
        }
        let (k, _) = self.best_instance(bag)?;
        self.instance_step(bag.instance(k), bag.label, config.disc_rate)
    }

    fn is_finite(&self) -> bool {
        match &self.net {
            MaxOutNet::Logit { w, bias } => bias.is_finite() && w.iter().all(|v| v.is_finite()),
            MaxOutNet::Mlp { w1, b1, w2, b2 } => {
                b2.is_finite()
                    && w1.iter().chain(b1.iter()).chain(w2.iter()).all(|v| v.is_finite())
            }
            MaxOutNet::ClassRbm(p) => p.is_finite(),
        }
    }
}
