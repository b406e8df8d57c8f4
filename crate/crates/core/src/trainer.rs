//! SGD loops with epoch-level early stopping and grid search.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{validation_split, Bag};
use crate::error::{Error, Result};
use crate::model::{BagClassifier, SgdModel};
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[serde(rename = "disc")]
    Discriminative,
    #[serde(rename = "gen")]
    Generative,
    Hybrid,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Discriminative => "disc",
            Objective::Generative => "gen",
            Objective::Hybrid => "hybrid",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disc" | "discriminative" => Ok(Objective::Discriminative),
            "gen" | "generative" => Ok(Objective::Generative),
            "hybrid" => Ok(Objective::Hybrid),
            other => Err(Error::invalid(format!("unknown objective {other:?} (expected disc, gen or hybrid)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub disc_rate: f64,
    pub gen_rate: f64,
    pub hidden_units: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Initial weights are uniform in `±init_scale / sqrt(D)`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Discriminative,
            disc_rate: 0.01,
            gen_rate: 0.0,
            hidden_units: 100,
            max_epochs: 200,
            patience: 20,
            validation_fraction: 0.2,
            seed: 0,
            init_scale: 1.0,
        }
    }
}

impl TrainConfig {
    /// Rates must be finite and non-negative. A hybrid run with one rate at
    /// zero is accepted and degenerates to the other objective.
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [("disc_rate", self.disc_rate), ("gen_rate", self.gen_rate)] {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {rate}")));
            }
        }
        if self.objective == Objective::Hybrid && self.disc_rate == 0.0 && self.gen_rate == 0.0 {
            return Err(Error::invalid("hybrid objective needs a positive rate"));
        }
        if self.hidden_units == 0 {
            return Err(Error::invalid("hidden_units must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::invalid("init_scale must be finite and >= 0"));
        }
        Ok(())
    }

    /// One config per rate in `rates`, applied to every active rate of the
    /// objective (both rates move together for hybrid runs).
    pub fn rate_grid(&self, rates: &[f64]) -> Vec<TrainConfig> {
        let mut grid = Vec::new();
        match self.objective {
            Objective::Discriminative => {
                for &r in rates {
                    grid.push(TrainConfig { disc_rate: r, ..self.clone() });
                }
            }
            Objective::Generative => {
                for &r in rates {
                    grid.push(TrainConfig { gen_rate: r, ..self.clone() });
                }
            }
            Objective::Hybrid => {
                for &rd in rates {
                    for &rg in rates {
                        grid.push(TrainConfig { disc_rate: rd, gen_rate: rg, ..self.clone() });
                    }
                }
            }
        }
        grid
    }
}

pub const DEFAULT_RATES: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Validation accuracy after each completed epoch.
    pub validation_accuracy: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.validation_accuracy.len()
    }
}

pub fn accuracy<M: BagClassifier + ?Sized>(model: &M, bags: &[Bag]) -> Result<f64> {
    if bags.is_empty() {
        return Err(Error::invalid("accuracy of an empty bag list"));
    }
    let mut correct = 0usize;
    for bag in bags {
        if model.predict(bag)? == bag.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / bags.len() as f64)
}

pub(crate) fn check_bags(bags: &[Bag], what: &str) -> Result<usize> {
    let first = bags
        .first()
        .ok_or_else(|| Error::invalid(format!("{what} set is empty")))?;
    let dim = first.dim();
    if let Some(bad) = bags.iter().find(|b| b.dim() != dim) {
        return Err(Error::invalid(format!(
            "bag {} has dimension {} but {what} set uses {dim}",
            bad.id,
            bad.dim()
        )));
    }
    Ok(dim)
}

/// Runs SGD from `model` on `fit`, selecting the epoch with the best
/// accuracy on `val` (earliest on ties).
pub fn train_with_validation<M: SgdModel>(
    mut model: M,
    fit: &[Bag],
    val: &[Bag],
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(M, TrainHistory)> {
    config.validate()?;
    check_bags(fit, "training")?;
    check_bags(val, "validation")?;

    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut history = TrainHistory {
        validation_accuracy: Vec::new(),
        best_epoch: 0,
        best_accuracy: f64::NEG_INFINITY,
        stopped_early: false,
    };
    let mut best = model.clone();

    for epoch in 1..=config.max_epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            model.sgd_step(&fit[i], config, rng)?;
        }
        if !model.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let acc = accuracy(&model, val)?;
        history.validation_accuracy.push(acc);
        if acc > history.best_accuracy {
            history.best_accuracy = acc;
            history.best_epoch = epoch;
            best = model.clone();
        } else if epoch - history.best_epoch >= config.patience {
            history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    Ok((best, history))
}

/// Splits off the validation set with a seed drawn from `rng`, builds the
/// initial model with `init`, and trains.
pub fn train<M, F>(init: F, bags: &[Bag], config: &TrainConfig, rng: &mut RngStream) -> Result<(M, TrainHistory)>
where
    M: SgdModel,
    F: FnOnce(&[Bag], &mut RngStream) -> Result<M>,
{
    config.validate()?;
    check_bags(bags, "training")?;
    let (fit, val) = validation_split(bags, config.validation_fraction, rng.next_u64())?;
    let model = init(&fit, rng)?;
    train_with_validation(model, &fit, &val, config, rng)
}

#[derive(Debug, Clone)]
pub struct GridResult<M> {
    pub index: usize,
    pub config: TrainConfig,
    pub model: M,
    pub history: TrainHistory,
}

/// Trains every grid point on one shared fit/validation split and keeps the
/// best by validation accuracy; ties go to the earlier entry. Grid point `i`
/// draws from `rng.derive(i)`, so the outcome does not depend on whether the
/// points run concurrently.
pub fn grid_search<M, F>(init: F, bags: &[Bag], grid: &[TrainConfig], rng: &mut RngStream, jobs: usize) -> Result<GridResult<M>>
where
    M: SgdModel + Send,
    F: Fn(&[Bag], &TrainConfig, &mut RngStream) -> Result<M> + Sync,
{
    let first = grid.first().ok_or_else(|| Error::invalid("grid search needs at least one config"))?;
    for config in grid {
        config.validate()?;
    }
    check_bags(bags, "training")?;
    let (fit, val) = validation_split(bags, first.validation_fraction, rng.next_u64())?;
    let base = rng.derive(0x6121d);

    let run = |i: usize| -> Result<(M, TrainHistory)> {
        let mut stream = base.derive(i as u64);
        let model = init(&fit, &grid[i], &mut stream)?;
        train_with_validation(model, &fit, &val, &grid[i], &mut stream)
    };
    let runs = crate::parallel::map_indexed(grid.len(), jobs, run);

    let mut best: Option<GridResult<M>> = None;
    for (i, outcome) in runs.into_iter().enumerate() {
        let (model, history) = outcome?;
        if best.as_ref().is_none_or(|b| history.best_accuracy > b.history.best_accuracy) {
            best = Some(GridResult { index: i, config: grid[i].clone(), model, history });
        }
    }
    Ok(best.expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy;
    use crate::model::{ModelVariant, RbmModel};
    use crate::params::RbmParams;

    fn class_init(fit: &[Bag], config: &TrainConfig, rng: &mut RngStream) -> Result<RbmModel> {
        Ok(RbmModel::initialize(ModelVariant::ClassRbm, fit[0].dim(), 2, config, rng))
    }

    fn toy_config(rate: f64) -> TrainConfig {
        TrainConfig { disc_rate: rate, hidden_units: 10, max_epochs: 50, patience: 50, ..Default::default() }
    }

    #[test]
    fn zero_rate_keeps_initialization() {
        let data = toy::single_instance_separable(20);
        let config = toy_config(0.0);
        let mut rng = RngStream::new(3, 0);
        let (fit, val) = validation_split(&data.bags, 0.2, 11).unwrap();
        let init = class_init(&fit, &config, &mut rng.derive(1)).unwrap();
        let (model, _) = train_with_validation(init.clone(), &fit, &val, &config, &mut rng).unwrap();
        assert_eq!(model, init);
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let data = toy::single_instance_separable(20);
        let config = toy_config(0.1);
        let mut rng = RngStream::new(5, 0);
        let (_, history) = train(|fit, r| class_init(fit, &config, r), &data.bags, &config, &mut rng).unwrap();
        assert_eq!(history.best_accuracy, 1.0);
        assert!(history.best_epoch <= 50);
    }

    #[test]
    fn deterministic_history() {
        let data = toy::separable_mil(30, 4, 2);
        let config = TrainConfig { max_epochs: 10, ..toy_config(0.05) };
        let variant = ModelVariant::Set(crate::set_rbm::SetVariant::ALL[1]);
        let run = || {
            let mut rng = RngStream::new(9, 0);
            train(
                |fit, r| Ok(RbmModel::initialize(variant, fit[0].dim(), 2, &config, r)),
                &data.bags,
                &config,
                &mut rng,
            )
            .unwrap()
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn best_is_max_over_epochs() {
        let data = toy::separable_mil(30, 4, 4);
        let config = TrainConfig { max_epochs: 30, patience: 3, ..toy_config(0.05) };
        let variant = ModelVariant::Set(crate::set_rbm::SetVariant::ALL[0]);
        let mut rng = RngStream::new(1, 0);
        let (_, h) = train(
            |fit, r| Ok(RbmModel::initialize(variant, fit[0].dim(), 2, &config, r)),
            &data.bags,
            &config,
            &mut rng,
        )
        .unwrap();
        let max = h.validation_accuracy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(h.best_accuracy, max);
        let first = h.validation_accuracy.iter().position(|&a| a == max).unwrap();
        assert_eq!(h.best_epoch, first + 1);
        assert!(h.epochs_run() - h.best_epoch <= config.patience);
    }

    #[test]
    fn hybrid_with_zero_gen_rate_matches_disc() {
        let data = toy::separable_mil(24, 3, 8);
        let variant = ModelVariant::Set(crate::set_rbm::SetVariant::ALL[2]);
        let disc = TrainConfig { max_epochs: 8, ..toy_config(0.05) };
        let hybrid = TrainConfig { objective: Objective::Hybrid, gen_rate: 0.0, ..disc.clone() };
        let run = |config: &TrainConfig| {
            let mut rng = RngStream::new(21, 0);
            train(
                |fit, r| Ok(RbmModel::initialize(variant, fit[0].dim(), 2, config, r)),
                &data.bags,
                config,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(&disc), run(&hybrid));
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = toy::single_instance_separable(10);
        let config = toy_config(1.0);
        let mut params = RbmParams::zeros(2, 2, 2);
        params.c[0] = f64::NAN;
        let model = RbmModel::new(ModelVariant::ClassRbm, params);
        let (fit, val) = validation_split(&data.bags, 0.2, 0).unwrap();
        let err = train_with_validation(model, &fit, &val, &config, &mut RngStream::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1 }));
    }

    #[test]
    fn empty_training_set_rejected() {
        let config = toy_config(0.1);
        let err = train(|fit, r| class_init(fit, &config, r), &[], &config, &mut RngStream::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn grid_rules() {
        let data = toy::single_instance_separable(20);
        let mut rng = RngStream::new(4, 0);
        assert!(grid_search(class_init, &data.bags, &[], &mut rng, 1).is_err());

        let one = [toy_config(0.1)];
        let r = grid_search(class_init, &data.bags, &one, &mut rng, 1).unwrap();
        assert_eq!(r.index, 0);

        let two = [toy_config(0.0), toy_config(0.1)];
        let r = grid_search(class_init, &data.bags, &two, &mut RngStream::new(4, 0), 1).unwrap();
        assert_eq!(r.index, 1);

        // Identical configs tie; the first wins.
        let same = [toy_config(0.1), toy_config(0.1)];
        let r = grid_search(class_init, &data.bags, &same, &mut RngStream::new(4, 0), 1).unwrap();
        assert_eq!(r.index, 0);
    }

    #[test]
    fn grid_independent_of_jobs() {
        let data = toy::separable_mil(20, 3, 1);
        let variant = ModelVariant::Set(crate::set_rbm::SetVariant::ALL[0]);
        let grid = TrainConfig { max_epochs: 5, ..toy_config(0.0) }.rate_grid(&DEFAULT_RATES);
        let init = |fit: &[Bag], c: &TrainConfig, r: &mut RngStream| Ok(RbmModel::initialize(variant, fit[0].dim(), 2, c, r));
        let a = grid_search(init, &data.bags, &grid, &mut RngStream::new(2, 0), 1).unwrap();
        let b = grid_search(init, &data.bags, &grid, &mut RngStream::new(2, 0), 3).unwrap();
        assert_eq!(a.index, b.index);
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { disc_rate: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { objective: Objective::Hybrid, disc_rate: 0.0, ..Default::default() }
            .validate()
            .is_err());
        assert_eq!("hybrid".parse::<Objective>().unwrap(), Objective::Hybrid);
        assert!("both".parse::<Objective>().is_err());
        assert_eq!(TrainConfig::default().rate_grid(&DEFAULT_RATES).len(), 3);
        let h = TrainConfig { objective: Objective::Hybrid, ..Default::default() };
        assert_eq!(h.rate_grid(&DEFAULT_RATES).len(), 9);
    }
}
