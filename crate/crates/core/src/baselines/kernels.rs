use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::Bag;
use crate::error::{Error, Result};
use crate::parallel::map_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// miGraph with the per-bag adaptive threshold.
    MiGraph,
    /// miGraph with one fixed threshold `sigma0` for all bags.
    MiGraph2,
    /// Symmetrized sum of per-instance best matches.
    Max,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::MiGraph => "migraph",
            KernelKind::MiGraph2 => "migraph2",
            KernelKind::Max => "max",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "migraph" => Ok(KernelKind::MiGraph),
            "migraph2" => Ok(KernelKind::MiGraph2),
            "max" => Ok(KernelKind::Max),
            other => Err(Error::invalid(format!("unknown kernel {other:?} (expected migraph, migraph2 or max)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    /// Mean pairwise instance distance within each bag.
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
    /// Only used (and required) by `migraph2`.
    pub sigma0: Option<f64>,
    pub c_svm: f64,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!("kernel gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.c_svm.is_finite() && self.c_svm > 0.0) {
            return Err(Error::invalid(format!("SVM C must be > 0, got {}", self.c_svm)));
        }
        match (self.kind, self.sigma0) {
            (KernelKind::MiGraph2, None) => Err(Error::invalid("migraph2 needs sigma0")),
            (_, Some(s)) if !(s.is_finite() && s > 0.0) => {
                Err(Error::invalid(format!("sigma0 must be > 0, got {s}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        match self.kind {
            KernelKind::MiGraph2 => SigmaMode::Fixed(self.sigma0.unwrap_or(f64::NAN)),
            _ => SigmaMode::Adaptive,
        }
    }

    /// Same gram matrix regardless of `c_svm`.
    pub fn same_gram(&self, other: &KernelSpec) -> bool {
        self.kind == other.kind
            && self.gamma == other.gamma
            && (self.kind != KernelKind::MiGraph2 || self.sigma0 == other.sigma0)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kernel={} gamma={} ", self.kind, self.gamma)?;
        if self.kind == KernelKind::MiGraph2 {
            if let Some(s) = self.sigma0 {
                write!(f, "sigma0={s} ")?;
            }
        }
        write!(f, "C={}", self.c_svm)
    }
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn gaussian(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    (-gamma * squared_distance(a, b)).exp()
}

/// miGraph instance weights `w_s = 1 / #{s' : ||x_s - x_s'|| < sigma}`.
/// The self-edge always counts, so every weight lies in `(0, 1]`.
pub fn migraph_weights(bag: &Bag, mode: SigmaMode) -> Result<Vec<f64>> {
    let n = bag.len();
    let mut dist = vec![0.0; n * n];
    for s in 0..n {
        for t in s + 1..n {
            let d = squared_distance(bag.instance(s), bag.instance(t)).sqrt();
            dist[s * n + t] = d;
            dist[t * n + s] = d;
        }
    }
    let sigma = match mode {
        SigmaMode::Fixed(s) => {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(format!("fixed sigma must be > 0, got {s}")));
            }
            s
        }
        SigmaMode::Adaptive => {
            if n < 2 {
                return Err(Error::invalid(format!(
                    "bag {} has one instance; the adaptive miGraph threshold is undefined",
                    bag.id
                )));
            }
            let mut total = 0.0;
            for s in 0..n {
                for t in s + 1..n {
                    total += dist[s * n + t];
                }
            }
            total / (n * (n - 1) / 2) as f64
        }
    };
    Ok((0..n)
        .map(|s| {
            let neighbours = (0..n).filter(|&t| t != s && dist[s * n + t] < sigma).count();
            1.0 / (1 + neighbours) as f64
        })
        .collect())
}

fn migraph_with_weights(a: &Bag, wa: &[f64], b: &Bag, wb: &[f64], gamma: f64) -> f64 {
    let mut num = 0.0;
    for (s, &ws) in wa.iter().enumerate() {
        for (t, &wt) in wb.iter().enumerate() {
            num += ws * wt * gaussian(a.instance(s), b.instance(t), gamma);
        }
    }
    num / (wa.iter().sum::<f64>() * wb.iter().sum::<f64>())
}

fn check_pair(a: &Bag, b: &Bag, gamma: f64) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "bags {} and {} differ in dimension ({} vs {})",
            a.id,
            b.id,
            a.dim(),
            b.dim()
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("kernel gamma must be > 0, got {gamma}")));
    }
    Ok(())
}

pub fn migraph_kernel(a: &Bag, b: &Bag, gamma: f64, mode: SigmaMode) -> Result<f64> {
    check_pair(a, b, gamma)?;
    let wa = migraph_weights(a, mode)?;
    let wb = migraph_weights(b, mode)?;
    Ok(migraph_with_weights(a, &wa, b, &wb, gamma))
}

pub fn max_kernel(a: &Bag, b: &Bag, gamma: f64) -> Result<f64> {
    check_pair(a, b, gamma)?;
    Ok(max_unchecked(a, b, gamma))
}

fn max_unchecked(a: &Bag, b: &Bag, gamma: f64) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut k = vec![0.0; n * m];
    for s in 0..n {
        for t in 0..m {
            k[s * m + t] = gaussian(a.instance(s), b.instance(t), gamma);
        }
    }
    let rows: f64 = (0..n)
        .map(|s| k[s * m..(s + 1) * m].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    let cols: f64 = (0..m)
        .map(|t| (0..n).map(|s| k[s * m + t]).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    0.5 * (rows / n as f64 + cols / m as f64)
}

/// A kernel with per-bag preprocessing done once.
struct Prepared<'a> {
    spec: KernelSpec,
    bags: &'a [Bag],
    weights: Vec<Vec<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(spec: &KernelSpec, bags: &'a [Bag]) -> Result<Self> {
        spec.validate()?;
        let weights = match spec.kind {
            KernelKind::Max => Vec::new(),
            _ => bags
                .iter()
                .map(|b| migraph_weights(b, spec.sigma_mode()))
                .collect::<Result<_>>()?,
        };
        Ok(Self { spec: *spec, bags, weights })
    }

    fn eval(&self, i: usize, other: &Prepared, j: usize) -> f64 {
        let (a, b) = (&self.bags[i], &other.bags[j]);
        match self.spec.kind {
            KernelKind::Max => max_unchecked(a, b, self.spec.gamma),
            _ => migraph_with_weights(a, &self.weights[i], b, &other.weights[j], self.spec.gamma),
        }
    }
}

fn check_dims(bags: &[Bag], dim: usize) -> Result<()> {
    if let Some(b) = bags.iter().find(|b| b.dim() != dim) {
        return Err(Error::invalid(format!("bag {} has dimension {}, expected {dim}", b.id, b.dim())));
    }
    Ok(())
}

/// Full symmetric gram matrix; the upper triangle is computed and mirrored.
pub fn gram_matrix(bags: &[Bag], spec: &KernelSpec, jobs: usize) -> Result<Array2<f64>> {
    if let Some(first) = bags.first() {
        check_dims(bags, first.dim())?;
    }
    let prep = Prepared::new(spec, bags)?;
    let n = bags.len();
    let rows = map_indexed(n, jobs, |i| (i..n).map(|j| prep.eval(i, &prep, j)).collect::<Vec<_>>());
    let mut k = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            k[[i, i + off]] = v;
            k[[i + off, i]] = v;
        }
    }
    Ok(k)
}

/// `K[i, j] = k(rows[i], cols[j])`.
pub fn cross_kernel(rows: &[Bag], cols: &[Bag], spec: &KernelSpec, jobs: usize) -> Result<Array2<f64>> {
    if let Some(first) = rows.first().or(cols.first()) {
        check_dims(rows, first.dim())?;
        check_dims(cols, first.dim())?;
    }
    let pr = Prepared::new(spec, rows)?;
    let pc = Prepared::new(spec, cols)?;
    let m = cols.len();
    let out = map_indexed(rows.len(), jobs, |i| (0..m).map(|j| pr.eval(i, &pc, j)).collect::<Vec<_>>());
    let mut k = Array2::zeros((rows.len(), m));
    for (i, row) in out.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            k[[i, j]] = v;
        }
    }
    Ok(k)
}
