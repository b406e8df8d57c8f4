//! Soft-margin kernel SVM solved by SMO with second-order working-set
//! selection, plus a one-vs-rest bag classifier on top of the set kernels.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::kernels::{cross_kernel, gram_matrix, KernelSpec};
use crate::data::Bag;
use crate::error::{Error, Result};
use crate::model::BagClassifier;
use crate::numerics::raw;

/// Maximal KKT violation `max_up(-y G) - min_low(-y G)` accepted at
/// convergence.
pub const KKT_TOLERANCE: f64 = 1e-3;
const SYMMETRY_TOLERANCE: f64 = 1e-8;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// `alpha_i * y_i` for every training point (zero off the support).
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub support: Vec<usize>,
    pub iterations: usize,
    /// Set when the iteration cap stopped the solver before convergence.
    pub warning: Option<String>,
}

impl SvmModel {
    pub fn converged(&self) -> bool {
        self.warning.is_none()
    }
}

/// `sum_i alpha_i y_i K(x_i, .) + bias`; `row[i]` is the kernel between the
/// query and training point `i`.
pub fn svm_predict(model: &SvmModel, row: ArrayView1<f64>) -> Result<f64> {
    if row.len() != model.coefficients.len() {
        return Err(Error::invalid(format!(
            "kernel row has {} entries, model was trained on {}",
            row.len(),
            model.coefficients.len()
        )));
    }
    Ok(model.support.iter().map(|&i| model.coefficients[i] * row[i]).sum::<f64>() + model.bias)
}

pub fn svm_train(gram: ArrayView2<f64>, labels: &[f64], c: f64) -> Result<SvmModel> {
    svm_train_with(gram, labels, c, KKT_TOLERANCE, None)
}

/// SMO with an explicit stopping tolerance and iteration cap (default
/// `max(10^7, 100 n)`).
pub fn svm_train_with(gram: ArrayView2<f64>, labels: &[f64], c: f64, tolerance: f64, max_iter: Option<usize>) -> Result<SvmModel> {
    let n = labels.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::invalid(format!(
            "gram is {}x{} but there are {n} labels",
            gram.nrows(),
            gram.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("SVM training set is empty"));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(format!("SVM C must be > 0, got {c}")));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::invalid(format!("SVM labels must be +1 or -1, got {bad}")));
    }
    for i in 0..n {
        for j in i + 1..n {
            let gap = (gram[[i, j]] - gram[[j, i]]).abs();
            if !(gap <= SYMMETRY_TOLERANCE) {
                return Err(Error::invalid(format!(
                    "gram matrix is not symmetric: |K[{i},{j}] - K[{j},{i}]| = {gap}"
                )));
            }
        }
    }

    let y = labels;
    let k = |i: usize, j: usize| gram[[i, j]];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let cap = max_iter.unwrap_or((100 * n).max(10_000_000));
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut warning = None;
    loop {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -b * b / a;
                if obj < best_obj {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tolerance {
            break;
        }
        if iterations >= cap {
            warning = Some(format!(
                "SMO stopped at the iteration cap ({cap}) with KKT violation {:.3e}",
                gmax - gmin
            ));
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k(i, j);
        if y[i] != y[j] {
            let mut quad = k(i, i) + k(j, j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k(i, i) + k(j, j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(t, i) * di + y[j] * k(t, j) * dj);
        }
    }

    // Bias from the free support vectors, else the midpoint of the bounds.
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            free += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else {
        match (ub.is_finite(), lb.is_finite()) {
            (true, true) => 0.5 * (ub + lb),
            (true, false) => ub,
            (false, true) => lb,
            (false, false) => 0.0,
        }
    };

    let coefficients: Vec<f64> = alpha.iter().zip(y).map(|(a, yt)| a * yt).collect();
    let support = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    Ok(SvmModel { coefficients, bias: -rho, support, iterations, warning })
}

/// Set-kernel SVM over bags; one machine for binary tasks (class 1 is
/// positive), one-vs-rest machines otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmClassifier {
    pub spec: KernelSpec,
    pub classes: usize,
    pub train_bags: Vec<Bag>,
    pub machines: Vec<SvmModel>,
}

impl SvmClassifier {
    /// Trains on `bags`; `gram` may be supplied to skip recomputation.
    pub fn fit(spec: &KernelSpec, bags: &[Bag], classes: usize, gram: Option<&Array2<f64>>, jobs: usize) -> Result<Self> {
        spec.validate()?;
        if classes < 2 {
            return Err(Error::invalid("SVM needs at least two classes"));
        }
        let owned;
        let gram = match gram {
            Some(g) => g,
            None => {
                owned = gram_matrix(bags, spec, jobs)?;
                &owned
            }
        };
        let targets: Vec<usize> = if classes == 2 { vec![1] } else { (0..classes).collect() };
        let mut machines = Vec::with_capacity(targets.len());
        for target in targets {
            let labels: Vec<f64> = bags.iter().map(|b| if b.label == target { 1.0 } else { -1.0 }).collect();
            machines.push(svm_train(gram.view(), &labels, spec.c_svm)?);
        }
        Ok(Self { spec: *spec, classes, train_bags: bags.to_vec(), machines })
    }

    pub fn warnings(&self) -> Vec<&str> {
        self.machines.iter().filter_map(|m| m.warning.as_deref()).collect()
    }

    /// Decision values for many bags at once.
    pub fn decision_values(&self, bags: &[Bag], jobs: usize) -> Result<Vec<Vec<f64>>> {
        let rows = cross_kernel(bags, &self.train_bags, &self.spec, jobs)?;
        rows.rows()
            .into_iter()
            .map(|row| self.machines.iter().map(|m| svm_predict(m, row)).collect())
            .collect()
    }

    /// Confidence-style posterior: `sigm(f)` for binary tasks, softmax of the
    /// one-vs-rest scores otherwise.
    pub fn scores_to_posterior(&self, scores: &[f64]) -> Vec<f64> {
        if self.classes == 2 {
            let p = raw::sigmoid(scores[0]);
            vec![1.0 - p, p]
        } else {
            let mut p = scores.to_vec();
            raw::softmax_in_place(&mut p);
            p
        }
    }
}

impl BagClassifier for SvmClassifier {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn posterior(&self, bag: &Bag) -> Result<Vec<f64>> {
        let scores = self.decision_values(std::slice::from_ref(bag), 1)?;
        Ok(self.scores_to_posterior(&scores[0]))
    }
}
