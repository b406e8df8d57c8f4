//! Named model families, their hyper-parameter grids, and fitting on one
//! training set.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    cross_kernel, gram_matrix, pooled_bag, read_gram, write_gram, GramHeader, KernelKind, KernelSpec, MajorityModel,
    MaxOutKind, MaxOutModel, SvmClassifier,
};
use crate::data::{validation_split_indices, Bag, FeatureScaler};
use crate::error::{Error, Result};
use crate::model::{BagClassifier, ModelVariant, RbmModel};
use crate::numerics::{raw, RngStream};
use crate::set_rbm::{Family, Pooling, SetVariant};
use crate::trainer::{grid_search, Objective, TrainConfig, DEFAULT_RATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    /// ClassRBM on the `[max | min | mean]` pooled bag.
    ClassRbmPoolIn,
    Set(SetVariant),
    MaxOut(MaxOutKind),
    Svm(KernelKind),
    Majority,
}

impl ModelSpec {
    pub const ALL: [ModelSpec; 12] = [
        ModelSpec::ClassRbmPoolIn,
        ModelSpec::Set(SetVariant::new(Family::Xor, Pooling::Soft)),
        ModelSpec::Set(SetVariant::new(Family::Xor, Pooling::HardMax)),
        ModelSpec::Set(SetVariant::new(Family::Or, Pooling::Soft)),
        ModelSpec::Set(SetVariant::new(Family::Or, Pooling::HardMax)),
        ModelSpec::MaxOut(MaxOutKind::Logit),
        ModelSpec::MaxOut(MaxOutKind::Mlp),
        ModelSpec::MaxOut(MaxOutKind::ClassRbm),
        ModelSpec::Svm(KernelKind::MiGraph),
        ModelSpec::Svm(KernelKind::MiGraph2),
        ModelSpec::Svm(KernelKind::Max),
        ModelSpec::Majority,
    ];

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|m| m.to_string()).collect()
    }

    pub fn is_svm(&self) -> bool {
        matches!(self, ModelSpec::Svm(_))
    }

    pub fn is_sgd(&self) -> bool {
        matches!(self, ModelSpec::ClassRbmPoolIn | ModelSpec::Set(_) | ModelSpec::MaxOut(_))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::ClassRbmPoolIn => f.write_str("classrbm-poolin"),
            ModelSpec::Set(v) => v.fmt(f),
            ModelSpec::MaxOut(k) => write!(f, "maxout-{k}"),
            ModelSpec::Svm(k) => write!(f, "svm-{k}"),
            ModelSpec::Majority => f.write_str("majority"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|m| m.to_string() == s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown model {s:?}; expected one of {}", Self::names().join(", "))))
    }
}

/// SVM hyper-parameter grid. With `relative`, `gammas` multiply
/// `1 / mean squared instance distance` and `sigma0s` multiply the mean
/// instance distance, both measured on the fit split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelGrid {
    pub gammas: Vec<f64>,
    pub c_values: Vec<f64>,
    pub sigma0s: Vec<f64>,
    pub relative: bool,
}

impl Default for KernelGrid {
    fn default() -> Self {
        Self {
            gammas: vec![0.25, 1.0, 4.0],
            c_values: vec![1.0, 10.0, 100.0],
            sigma0s: vec![0.25, 0.5, 1.0],
            relative: true,
        }
    }
}

impl KernelGrid {
    /// Concrete kernel specs in grid order (gamma, then sigma0, then C).
    pub fn specs(&self, kind: KernelKind, fit: &[Bag]) -> Result<Vec<KernelSpec>> {
        if self.gammas.is_empty() || self.c_values.is_empty() || (kind == KernelKind::MiGraph2 && self.sigma0s.is_empty()) {
            return Err(Error::invalid("kernel grid has an empty axis"));
        }
        let (gamma_unit, sigma_unit) = if self.relative {
            let m2 = mean_squared_distance(fit);
            if !(m2 > 0.0) {
                return Err(Error::invalid("all training instances coincide; relative kernel widths are undefined"));
            }
            (1.0 / m2, mean_distance(fit))
        } else {
            (1.0, 1.0)
        };
        let sigmas: Vec<Option<f64>> = if kind == KernelKind::MiGraph2 {
            self.sigma0s.iter().map(|s| Some(s * sigma_unit)).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::new();
        for &g in &self.gammas {
            for &s in &sigmas {
                for &c in &self.c_values {
                    let spec = KernelSpec { kind, gamma: g * gamma_unit, sigma0: s, c_svm: c };
                    spec.validate()?;
                    out.push(spec);
                }
            }
        }
        Ok(out)
    }
}

const DISTANCE_SAMPLE: usize = 600;

/// Instances used for the distance scale: all of them, or an even stride
/// when there are many.
fn distance_sample(bags: &[Bag]) -> Vec<Vec<f64>> {
    let all: Vec<Vec<f64>> = bags.iter().flat_map(|b| b.instances().rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>()).collect();
    let stride = all.len().div_ceil(DISTANCE_SAMPLE).max(1);
    all.into_iter().step_by(stride).collect()
}

fn pairwise(bags: &[Bag], f: impl Fn(f64) -> f64) -> f64 {
    let xs = distance_sample(bags);
    let (mut total, mut count) = (0.0, 0usize);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let d2: f64 = xs[i].iter().zip(&xs[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            total += f(d2);
            count += 1;
        }
    }
    if count == 0 { 0.0 } else { total / count as f64 }
}

pub fn mean_squared_distance(bags: &[Bag]) -> f64 {
    pairwise(bags, |d2| d2)
}

pub fn mean_distance(bags: &[Bag]) -> f64 {
    pairwise(bags, f64::sqrt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    /// Used by the RBM and max-output models.
    pub train: Vec<TrainConfig>,
    pub kernel: KernelGrid,
}

impl HyperGrid {
    /// The default rate grid around `base`, and the default kernel grid.
    pub fn default_for(base: &TrainConfig) -> Self {
        Self { train: base.rate_grid(&DEFAULT_RATES), kernel: KernelGrid::default() }
    }

    pub fn single(config: TrainConfig) -> Self {
        Self { train: vec![config], kernel: KernelGrid::default() }
    }
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Rbm(RbmModel),
    /// A ClassRBM applied to the pooled bag.
    PoolIn(RbmModel),
    MaxOut(MaxOutModel),
    Svm(SvmClassifier),
    Majority(MajorityModel),
}

impl TrainedModel {
    /// Posteriors for many bags; SVMs batch their kernel rows.
    pub fn posteriors(&self, bags: &[Bag], jobs: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::Svm(svm) => Ok(svm
                .decision_values(bags, jobs)?
                .iter()
                .map(|s| svm.scores_to_posterior(s))
                .collect()),
            _ => bags.iter().map(|b| self.posterior(b)).collect(),
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        match self {
            TrainedModel::Svm(svm) => svm.warnings().into_iter().map(String::from).collect(),
            _ => Vec::new(),
        }
    }
}

impl BagClassifier for TrainedModel {
    fn num_classes(&self) -> usize {
        match self {
            TrainedModel::Rbm(m) | TrainedModel::PoolIn(m) => m.num_classes(),
            TrainedModel::MaxOut(m) => m.num_classes(),
            TrainedModel::Svm(m) => m.num_classes(),
            TrainedModel::Majority(m) => m.num_classes(),
        }
    }

    fn posterior(&self, bag: &Bag) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Rbm(m) => m.posterior(bag),
            TrainedModel::PoolIn(m) => m.posterior(&pooled_bag(bag)),
            TrainedModel::MaxOut(m) => m.posterior(bag),
            TrainedModel::Svm(m) => m.posterior(bag),
            TrainedModel::Majority(m) => m.posterior(bag),
        }
    }
}

/// A trained model plus the feature scaling its inputs need.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub model: TrainedModel,
    pub scaler: Option<FeatureScaler>,
}

impl Predictor {
    pub fn prepare(&self, bags: &[Bag]) -> Result<Vec<Bag>> {
        match &self.scaler {
            Some(s) => bags.iter().map(|b| s.apply_bag(b)).collect(),
            None => Ok(bags.to_vec()),
        }
    }

    pub fn posteriors(&self, bags: &[Bag], jobs: usize) -> Result<Vec<Vec<f64>>> {
        self.model.posteriors(&self.prepare(bags)?, jobs)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub jobs: usize,
    /// Directory for gram matrix caches; `None` disables caching.
    pub gram_cache: Option<PathBuf>,
    /// Names the training set in cache files (e.g. dataset plus fold).
    pub cache_tag: String,
}

/// Outcome of fitting one model on one training set.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: TrainedModel,
    /// Human-readable description of the selected hyper-parameters.
    pub selected: String,
    pub validation_accuracy: Option<f64>,
}

/// Fits `spec` on `bags` (already scaled) with hyper-parameters chosen on a
/// stratified validation split. The returned model is trained on the fit
/// split only.
pub fn fit_model(spec: &ModelSpec, bags: &[Bag], classes: usize, grid: &HyperGrid, rng: &mut RngStream, options: &FitOptions) -> Result<Fitted> {
    if bags.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let jobs = options.jobs.max(1);
    let selected = |g: &TrainConfig, acc: f64| {
        let rates = match g.objective {
            Objective::Discriminative => format!("disc_rate={}", g.disc_rate),
            Objective::Generative => format!("gen_rate={}", g.gen_rate),
            Objective::Hybrid => format!("disc_rate={} gen_rate={}", g.disc_rate, g.gen_rate),
        };
        format!("objective={} {rates} val_acc={acc}", g.objective)
    };
    match *spec {
        ModelSpec::Majority => Ok(Fitted {
            model: TrainedModel::Majority(MajorityModel::fit(bags, classes)?),
            selected: String::new(),
            validation_accuracy: None,
        }),
        ModelSpec::ClassRbmPoolIn => {
            let pooled: Vec<Bag> = bags.iter().map(pooled_bag).collect();
            let init = |fit: &[Bag], c: &TrainConfig, r: &mut RngStream| {
                Ok(RbmModel::initialize(ModelVariant::ClassRbm, fit[0].dim(), classes, c, r))
            };
            let best = grid_search(init, &pooled, &grid.train, rng, jobs)?;
            Ok(Fitted {
                selected: selected(&best.config, best.history.best_accuracy),
                validation_accuracy: Some(best.history.best_accuracy),
                model: TrainedModel::PoolIn(best.model),
            })
        }
        ModelSpec::Set(v) => {
            let init = |fit: &[Bag], c: &TrainConfig, r: &mut RngStream| {
                Ok(RbmModel::initialize(ModelVariant::Set(v), fit[0].dim(), classes, c, r))
            };
            let best = grid_search(init, bags, &grid.train, rng, jobs)?;
            Ok(Fitted {
                selected: selected(&best.config, best.history.best_accuracy),
                validation_accuracy: Some(best.history.best_accuracy),
                model: TrainedModel::Rbm(best.model),
            })
        }
        ModelSpec::MaxOut(kind) => {
            if classes != 2 {
                return Err(Error::UnsupportedTask(format!(
                    "{spec} needs a binary task, got {classes} classes"
                )));
            }
            let init = |fit: &[Bag], c: &TrainConfig, r: &mut RngStream| MaxOutModel::initialize(kind, fit[0].dim(), classes, c, r);
            let best = grid_search(init, bags, &grid.train, rng, jobs)?;
            Ok(Fitted {
                selected: selected(&best.config, best.history.best_accuracy),
                validation_accuracy: Some(best.history.best_accuracy),
                model: TrainedModel::MaxOut(best.model),
            })
        }
        ModelSpec::Svm(kind) => fit_svm(kind, bags, classes, grid, rng, options),
    }
}

fn cached_gram(spec: &KernelSpec, fit: &[Bag], options: &FitOptions) -> Result<Array2<f64>> {
    let Some(dir) = &options.gram_cache else {
        return gram_matrix(fit, spec, options.jobs.max(1));
    };
    let tag = if options.cache_tag.is_empty() { "data" } else { &options.cache_tag };
    let sigma = spec.sigma0.filter(|_| spec.kind == KernelKind::MiGraph2).map_or("adaptive".to_string(), |s| s.to_string());
    let path = dir.join(format!("{tag}-{}-g{}-s{sigma}.gram", spec.kind, spec.gamma));
    if let Ok(file) = std::fs::File::open(&path) {
        let (header, gram) = read_gram(std::io::BufReader::new(file))?;
        if header.matches(spec, tag, fit.len()) {
            return Ok(gram);
        }
    }
    let gram = gram_matrix(fit, spec, options.jobs.max(1))?;
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(&path)?;
    write_gram(std::io::BufWriter::new(file), &GramHeader::new(spec, tag, fit.len()), &gram)?;
    Ok(gram)
}

fn fit_svm(kind: KernelKind, bags: &[Bag], classes: usize, grid: &HyperGrid, rng: &mut RngStream, options: &FitOptions) -> Result<Fitted> {
    let fraction = grid.train.first().map_or(0.2, |c| c.validation_fraction);
    let labels: Vec<usize> = bags.iter().map(|b| b.label).collect();
    let (fit_idx, val_idx) = validation_split_indices(&labels, fraction, rng.next_u64())?;
    let fit: Vec<Bag> = fit_idx.iter().map(|&i| bags[i].clone()).collect();
    let val: Vec<Bag> = val_idx.iter().map(|&i| bags[i].clone()).collect();
    let specs = grid.kernel.specs(kind, &fit)?;
    let jobs = options.jobs.max(1);

    let mut best: Option<(f64, SvmClassifier)> = None;
    let mut gram: Option<(KernelSpec, Array2<f64>, Array2<f64>)> = None;
    for spec in &specs {
        if gram.as_ref().is_none_or(|(s, _, _)| !s.same_gram(spec)) {
            let g = cached_gram(spec, &fit, options)?;
            let cross = cross_kernel(&val, &fit, spec, jobs)?;
            gram = Some((*spec, g, cross));
        }
        let (_, g, cross) = gram.as_ref().expect("computed above");
        let svm = SvmClassifier::fit(spec, &fit, classes, Some(g), jobs)?;
        let mut correct = 0usize;
        for (row, bag) in cross.rows().into_iter().zip(&val) {
            let scores: Vec<f64> = svm
                .machines
                .iter()
                .map(|m| crate::baselines::svm_predict(m, row))
                .collect::<Result<_>>()?;
            if raw::argmax(&svm.scores_to_posterior(&scores)) == bag.label {
                correct += 1;
            }
        }
        let acc = correct as f64 / val.len() as f64;
        if best.as_ref().is_none_or(|(a, _)| acc > *a) {
            best = Some((acc, svm));
        }
    }
    let (acc, svm) = best.expect("kernel grid is non-empty");
    Ok(Fitted {
        selected: format!("{} val_acc={acc}", svm.spec),
        validation_accuracy: Some(acc),
        model: TrainedModel::Svm(svm),
    })
}
