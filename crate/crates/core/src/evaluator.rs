//! Repeated cross-validation, paired t-tests, rejection curves, and report
//! emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{Dataset, FeatureScaler, FoldPlan};
use crate::error::{Error, Result};
use crate::numerics::{raw, RngStream};
use crate::parallel::map_indexed;
use crate::registry::{fit_model, FitOptions, HyperGrid, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagResult {
    pub bag_id: String,
    pub label: usize,
    pub predicted: usize,
    /// Largest class posterior.
    pub confidence: f64,
}

impl BagResult {
    pub fn correct(&self) -> bool {
        self.label == self.predicted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub bags: Vec<BagResult>,
    pub accuracy: f64,
    /// Hyper-parameters picked on the validation split.
    pub selected: String,
}

impl FoldResult {
    pub fn new(repeat: usize, fold: usize, bags: Vec<BagResult>, selected: String) -> Self {
        let correct = bags.iter().filter(|b| b.correct()).count();
        let accuracy = if bags.is_empty() { 0.0 } else { correct as f64 / bags.len() as f64 };
        Self { repeat, fold, bags, accuracy, selected }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    /// Infinite when every difference is equal and non-zero.
    #[serde(with = "extended_float")]
    pub t: f64,
    pub df: usize,
    pub critical: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub test: TTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Ordered by (repeat, fold).
    pub folds: Vec<FoldResult>,
    /// Correct predictions over all test bags of all folds.
    pub accuracy: f64,
    pub comparisons: Vec<Comparison>,
    pub curve: Vec<CurvePoint>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }

    /// `(confidence, correct)` for every test bag.
    pub fn outcomes(&self) -> Vec<(f64, bool)> {
        self.folds
            .iter()
            .flat_map(|f| f.bags.iter().map(|b| (b.confidence, b.correct())))
            .collect()
    }

    /// File stem shared by this report's outputs.
    pub fn file_stem(&self) -> String {
        format!("{}-{}", self.model, self.dataset)
    }

    /// Adds a paired t-test against `reference` over matching folds.
    pub fn compare_with(&mut self, reference: &EvalReport, level: f64) -> Result<TTest> {
        let test = compare_reports(self, reference, level)?;
        self.comparisons.retain(|c| c.reference != reference.model);
        self.comparisons.push(Comparison { reference: reference.model.clone(), test });
        Ok(test)
    }
}

/// Options for [`run_cv`].
#[derive(Debug, Clone, Default)]
pub struct CvOptions {
    /// Worker threads for folds (and the grid inside a fold when folds run
    /// one at a time).
    pub jobs: usize,
    pub gram_cache: Option<PathBuf>,
}

/// Per (repeat, fold): fit the scaler on the training bags, pick
/// hyper-parameters on a validation split of them, and predict the test
/// fold. Fold `i` (in repeat-major order) draws from
/// `RngStream::new(master_seed, 0).derive(i)`, so results do not depend on
/// `jobs`.
pub fn run_cv(spec: &ModelSpec, dataset: &Dataset, plan: &FoldPlan, grid: &HyperGrid, master_seed: u64, options: &CvOptions) -> Result<EvalReport> {
    if plan.bag_ids.len() != dataset.len() || plan.bag_ids.iter().zip(&dataset.bags).any(|(id, b)| *id != b.id) {
        return Err(Error::invalid("fold plan was made for a different dataset"));
    }
    let jobs = options.jobs.max(1);
    let runs = plan.repeats * plan.k;
    let fold_jobs = jobs.min(runs);
    let inner_jobs = if fold_jobs > 1 { 1 } else { jobs };
    let root = RngStream::new(master_seed, 0);

    let run = |i: usize| -> Result<(FoldResult, Vec<String>)> {
        let (repeat, fold) = (i / plan.k, i % plan.k);
        let annotate = |e: Error| Error::Fold { repeat, fold, source: Box::new(e) };
        let (train_idx, test_idx) = plan.split(repeat, fold);
        let train = dataset.subset(&train_idx);
        let test = dataset.subset(&test_idx);
        let scaler = FeatureScaler::fit(&train.bags).map_err(annotate)?;
        let train = scaler.apply(&train).map_err(annotate)?;
        let test = scaler.apply(&test).map_err(annotate)?;

        let mut rng = root.derive(i as u64);
        let fit_options = FitOptions {
            jobs: inner_jobs,
            gram_cache: options.gram_cache.clone(),
            cache_tag: format!("{}-r{repeat}-f{fold}", dataset.name),
        };
        let fitted = fit_model(spec, &train.bags, dataset.num_classes, grid, &mut rng, &fit_options).map_err(annotate)?;
        let posteriors = fitted.model.posteriors(&test.bags, inner_jobs).map_err(annotate)?;
        let bags = test
            .bags
            .iter()
            .zip(posteriors)
            .map(|(bag, p)| {
                let k = raw::argmax(&p);
                BagResult { bag_id: bag.id.clone(), label: bag.label, predicted: k, confidence: p[k] }
            })
            .collect();
        let warnings = fitted
            .model
            .warnings()
            .into_iter()
            .map(|w| format!("repeat {repeat}, fold {fold}: {w}"))
            .collect();
        Ok((FoldResult::new(repeat, fold, bags, fitted.selected), warnings))
    };

    let mut folds = Vec::with_capacity(runs);
    let mut warnings = Vec::new();
    for outcome in map_indexed(runs, fold_jobs, run) {
        let (fold, w) = outcome?;
        folds.push(fold);
        warnings.extend(w);
    }

    let total: usize = folds.iter().map(|f| f.bags.len()).sum();
    let correct: usize = folds.iter().map(|f| f.bags.iter().filter(|b| b.correct()).count()).sum();
    let mut report = EvalReport {
        model: spec.to_string(),
        dataset: dataset.name.clone(),
        k: plan.k,
        repeats: plan.repeats,
        seed: master_seed,
        folds,
        accuracy: correct as f64 / total as f64,
        comparisons: Vec::new(),
        curve: Vec::new(),
        warnings,
    };
    report.curve = rejection_curve(&report.outcomes())?;
    Ok(report)
}

/// Two-sided paired Student t-test on `a - b`.
///
/// All-zero differences give `t = 0`; equal non-zero differences give an
/// infinite `t`, which is significant.
pub fn paired_t_test(a: &[f64], b: &[f64], level: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("paired t-test on lists of length {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired t-test needs at least two pairs"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} not in (0, 1)")));
    }
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::invalid(e.to_string()))?;
    let critical = dist.inverse_cdf(1.0 - (1.0 - level) / 2.0);

    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / df as f64;
    let sd = var.sqrt();
    let t = if diffs.iter().all(|&d| d == 0.0) {
        0.0
    } else if sd == 0.0 {
        f64::INFINITY.copysign(mean)
    } else {
        mean / (sd / (n as f64).sqrt())
    };
    let p_value = if t.is_infinite() { 0.0 } else { 2.0 * (1.0 - dist.cdf(t.abs())) };
    Ok(TTest { t, df, critical, p_value, significant: t.abs() > critical })
}

/// Paired t-test of `a` against `b`, matching folds by (repeat, fold).
pub fn compare_reports(a: &EvalReport, b: &EvalReport, level: f64) -> Result<TTest> {
    let key = |r: &EvalReport| -> BTreeMap<(usize, usize), f64> {
        r.folds.iter().map(|f| ((f.repeat, f.fold), f.accuracy)).collect()
    };
    let (ka, kb) = (key(a), key(b));
    if ka.len() != kb.len() || ka.keys().any(|k| !kb.contains_key(k)) {
        return Err(Error::invalid(format!(
            "reports {} and {} do not cover the same folds",
            a.model, b.model
        )));
    }
    let xs: Vec<f64> = ka.values().copied().collect();
    let ys: Vec<f64> = ka.keys().map(|k| kb[k]).collect();
    paired_t_test(&xs, &ys, level)
}

/// Precision and recall when predictions with confidence below each
/// threshold are rejected. Thresholds are the distinct confidences and 0,
/// ascending.
pub fn rejection_curve(results: &[(f64, bool)]) -> Result<Vec<CurvePoint>> {
    if results.is_empty() {
        return Err(Error::invalid("rejection curve of an empty result list"));
    }
    if let Some((c, _)) = results.iter().find(|(c, _)| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid(format!("confidence {c} outside [0, 1]")));
    }
    let mut sorted: Vec<(f64, bool)> = results.to_vec();
    sorted.sort_by(|x, y| y.0.total_cmp(&x.0));
    let total = sorted.len() as f64;

    // Walk thresholds from high to low, accepting items as they pass.
    let mut thresholds: Vec<f64> = sorted.iter().map(|r| r.0).collect();
    thresholds.push(0.0);
    thresholds.dedup();
    let mut points = Vec::with_capacity(thresholds.len());
    let (mut accepted, mut correct, mut next) = (0usize, 0usize, 0usize);
    for &t in &thresholds {
        while next < sorted.len() && sorted[next].0 >= t {
            accepted += 1;
            correct += sorted[next].1 as usize;
            next += 1;
        }
        let precision = if accepted == 0 { 1.0 } else { correct as f64 / accepted as f64 };
        points.push(CurvePoint { threshold: t, precision, recall: correct as f64 / total });
    }
    points.reverse();
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Fold table as CSV (`model,dataset,repeat,fold,accuracy`) or the whole
/// report as JSON.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        ReportFormat::Csv => {
            let mut out = String::from("model,dataset,repeat,fold,accuracy\n");
            for f in &report.folds {
                let _ = writeln!(out, "{},{},{},{},{}", report.model, report.dataset, f.repeat, f.fold, f.accuracy);
            }
            Ok(out)
        }
    }
}

pub fn emit_curve_csv(report: &EvalReport) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in &report.curve {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall);
    }
    out
}

pub fn parse_report_json(text: &str) -> Result<EvalReport> {
    Ok(serde_json::from_str(text)?)
}

/// Floats that may be infinite, written as `"inf"` / `"-inf"` strings.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad number {t:?}"))),
        }
    }
}
