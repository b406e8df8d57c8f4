use std::fmt;

use crate::class_rbm;
use crate::data::Bag;
use crate::error::{Error, Result};
use crate::numerics::{raw, RngStream};
use crate::params::RbmParams;
use crate::set_rbm::{self, SetVariant};
use crate::trainer::{Objective, TrainConfig};

/// Anything that maps a bag to a class posterior.
pub trait BagClassifier {
    fn num_classes(&self) -> usize;

    fn posterior(&self, bag: &Bag) -> Result<Vec<f64>>;

    fn predict(&self, bag: &Bag) -> Result<usize> {
        Ok(raw::argmax(&self.posterior(bag)?))
    }

    /// `(predicted class, max posterior)`.
    fn predict_with_confidence(&self, bag: &Bag) -> Result<(usize, f64)> {
        let p = self.posterior(bag)?;
        let k = raw::argmax(&p);
        Ok((k, p[k]))
    }
}

/// A model trained one bag at a time by stochastic updates.
pub trait SgdModel: BagClassifier + Clone {
    fn sgd_step(&mut self, bag: &Bag, config: &TrainConfig, rng: &mut RngStream) -> Result<()>;

    fn is_finite(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    /// The single-vector model; bags must hold exactly one instance.
    ClassRbm,
    Set(SetVariant),
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelVariant::ClassRbm => f.write_str("classrbm"),
            ModelVariant::Set(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmModel {
    pub variant: ModelVariant,
    pub params: RbmParams,
}

fn singleton(bag: &Bag) -> Result<()> {
    if bag.len() != 1 {
        return Err(Error::invalid(format!(
            "classrbm expects single-vector bags; bag {} has {} instances",
            bag.id,
            bag.len()
        )));
    }
    Ok(())
}

impl RbmModel {
    pub fn new(variant: ModelVariant, params: RbmParams) -> Self {
        Self { variant, params }
    }

    pub fn initialize(variant: ModelVariant, inputs: usize, classes: usize, config: &TrainConfig, rng: &mut RngStream) -> Self {
        Self::new(
            variant,
            RbmParams::init(inputs, config.hidden_units, classes, config.init_scale, rng),
        )
    }

    pub fn free_energy(&self, bag: &Bag, y: usize) -> Result<f64> {
        match self.variant {
            ModelVariant::ClassRbm => {
                singleton(bag)?;
                class_rbm::free_energy(&self.params, bag.instance(0), y)
            }
            ModelVariant::Set(v) => set_rbm::set_free_energy(v, &self.params, bag, y),
        }
    }

    pub fn disc_gradient(&self, bag: &Bag, y: usize) -> Result<RbmParams> {
        match self.variant {
            ModelVariant::ClassRbm => {
                singleton(bag)?;
                class_rbm::disc_gradient(&self.params, bag.instance(0), y)
            }
            ModelVariant::Set(v) => set_rbm::set_disc_gradient(v, &self.params, bag, y),
        }
    }

    /// In-place CD-1 step. HardMax variants sample with the soft
    /// conditionals of their family.
    pub fn cd_step(&mut self, bag: &Bag, y: usize, rate: f64, rng: &mut RngStream) -> Result<()> {
        match self.variant {
            ModelVariant::ClassRbm => {
                singleton(bag)?;
                let x = bag.instance(0);
                let particle = class_rbm::gibbs_step(&self.params, x, y, rng)?;
                class_rbm::apply_cd(&mut self.params, x, y, &particle, rate);
            }
            ModelVariant::Set(v) => {
                let particle = set_rbm::set_gibbs_step(v.family, &self.params, bag, y, rng)?;
                set_rbm::apply_set_cd(&mut self.params, bag, y, &particle, rate);
            }
        }
        Ok(())
    }
}

impl BagClassifier for RbmModel {
    fn num_classes(&self) -> usize {
        self.params.classes()
    }

    fn posterior(&self, bag: &Bag) -> Result<Vec<f64>> {
        match self.variant {
            ModelVariant::ClassRbm => {
                singleton(bag)?;
                class_rbm::posterior(&self.params, bag.instance(0))
            }
            ModelVariant::Set(v) => set_rbm::set_posterior(v, &self.params, bag),
        }
    }
}

impl SgdModel for RbmModel {
    /// Discriminative step, then CD step, each skipped entirely (including
    /// its random draws) when its rate is zero.
    fn sgd_step(&mut self, bag: &Bag, config: &TrainConfig, rng: &mut RngStream) -> Result<()> {
        let (disc, gen) = match config.objective {
            Objective::Discriminative => (config.disc_rate, 0.0),
            Objective::Generative => (0.0, config.gen_rate),
            Objective::Hybrid => (config.disc_rate, config.gen_rate),
        };
        if disc > 0.0 {
            let g = self.disc_gradient(bag, bag.label)?;
            self.params.add_scaled(-disc, &g);
        }
        if gen > 0.0 {
            self.cd_step(bag, bag.label, gen, rng)?;
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}
