//! Reference implementations used only by the tests. They work from the
//! energy function directly (explicit enumeration of hidden states) and share
//! no code with the library beyond reading parameter fields.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setrbm::{Bag, Family, Pooling, RbmParams, SetVariant};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

fn normalize(logits: &[f64]) -> Vec<f64> {
    let z = lse(logits);
    logits.iter().map(|l| (l - z).exp()).collect()
}

pub fn random_params(r: &mut ChaCha8Rng, d: usize, h: usize, c: usize, range: f64) -> RbmParams {
    let mut p = RbmParams::zeros(d, h, c);
    for v in p.b.iter_mut().chain(p.c.iter_mut()).chain(p.d.iter_mut()).chain(p.w.iter_mut()).chain(p.u.iter_mut()) {
        *v = r.random_range(-range..range);
    }
    p
}

pub fn random_rows(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect()
}

pub fn bag(rows: &[Vec<f64>], label: usize) -> Bag {
    Bag::from_rows("t", label, rows).unwrap()
}

/// `c_j + W_j . x`
fn act(p: &RbmParams, x: &[f64], j: usize) -> f64 {
    p.c[j] + x.iter().enumerate().map(|(i, v)| p.w[[j, i]] * v).sum::<f64>()
}

fn input_bias(p: &RbmParams, rows: &[Vec<f64>]) -> f64 {
    rows.iter().flat_map(|x| x.iter().enumerate().map(|(i, v)| p.b[i] * v)).sum()
}

/// ClassRBM posterior by summing `exp(-E(x, y, h))` over all `2^H` hidden
/// vectors.
pub fn classrbm_enumerated(p: &RbmParams, x: &[f64]) -> Vec<f64> {
    let (h, c) = (p.c.len(), p.d.len());
    let logits: Vec<f64> = (0..c)
        .map(|y| {
            let terms: Vec<f64> = (0..1u32 << h)
                .map(|mask| {
                    let mut neg_e = p.d[y] + input_bias(p, &[x.to_vec()]);
                    for j in 0..h {
                        if mask >> j & 1 == 1 {
                            neg_e += act(p, x, j) + p.u[[j, y]];
                        }
                    }
                    neg_e
                })
                .collect();
            lse(&terms)
        })
        .collect();
    normalize(&logits)
}

/// Set posterior by enumerating, for every hidden index, all hidden-layer
/// configurations allowed by the family's constraint and summing
/// `exp(-E)`. The energy is additive over hidden indices, so the joint sum
/// is the product of the per-index sums.
///
/// XOR: `h_j^(s)` with at most one active `s`.
/// OR: free bits `h_j^(s)` plus a selector `g_j^(s)` (at most one `s`,
/// only where `h_j^(s) = 1`); only `g` connects to the class.
pub fn set_enumerated(family: Family, p: &RbmParams, rows: &[Vec<f64>]) -> Vec<f64> {
    let (h, c, n) = (p.c.len(), p.d.len(), rows.len());
    let logits: Vec<f64> = (0..c)
        .map(|y| {
            let mut total = p.d[y] + input_bias(p, rows);
            for j in 0..h {
                let a: Vec<f64> = rows.iter().map(|x| act(p, x, j)).collect();
                let mut terms = Vec::new();
                match family {
                    Family::Xor => {
                        terms.push(0.0);
                        for s in 0..n {
                            terms.push(a[s] + p.u[[j, y]]);
                        }
                    }
                    Family::Or => {
                        for mask in 0..1u32 << n {
                            let on = |s: usize| mask >> s & 1 == 1;
                            let base: f64 = (0..n).filter(|&s| on(s)).map(|s| a[s]).sum();
                            terms.push(base);
                            for _ in (0..n).filter(|&s| on(s)) {
                                terms.push(base + p.u[[j, y]]);
                            }
                        }
                    }
                }
                total += lse(&terms);
            }
            total
        })
        .collect();
    normalize(&logits)
}

/// Free energy with hard max pooling, written out from its definition.
pub fn hard_free_energy(family: Family, p: &RbmParams, rows: &[Vec<f64>], y: usize) -> f64 {
    let mut f = -p.d[y];
    for j in 0..p.c.len() {
        let pooled = rows
            .iter()
            .map(|x| {
                let a = act(p, x, j);
                match family {
                    Family::Xor => a,
                    Family::Or => -softplus(-a),
                }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        f -= softplus(pooled + p.u[[j, y]]);
    }
    f
}

/// Posterior of any variant, computed without the library.
pub fn oracle_posterior(variant: Option<SetVariant>, p: &RbmParams, rows: &[Vec<f64>]) -> Vec<f64> {
    match variant {
        None => classrbm_enumerated(p, &rows[0]),
        Some(v) if v.pooling == Pooling::Soft => set_enumerated(v.family, p, rows),
        Some(v) => {
            let logits: Vec<f64> = (0..p.d.len()).map(|y| -hard_free_energy(v.family, p, rows, y)).collect();
            normalize(&logits)
        }
    }
}

/// Every parameter in `b, c, d, W, U` order, row-major within blocks.
pub fn param_slots(p: &mut RbmParams) -> Vec<&mut f64> {
    p.b.iter_mut().chain(p.c.iter_mut()).chain(p.d.iter_mut()).chain(p.w.iter_mut()).chain(p.u.iter_mut()).collect()
}

pub fn flat(p: &RbmParams) -> Vec<f64> {
    p.b.iter().chain(p.c.iter()).chain(p.d.iter()).chain(p.w.iter()).chain(p.u.iter()).cloned().collect()
}

/// Central differences of `-ln p(y | X)` under the oracle posterior.
pub fn fd_gradient(variant: Option<SetVariant>, p: &RbmParams, rows: &[Vec<f64>], y: usize, eps: f64) -> Vec<f64> {
    let n = flat(p).len();
    (0..n)
        .map(|k| {
            let mut plus = p.clone();
            *param_slots(&mut plus)[k] += eps;
            let mut minus = p.clone();
            *param_slots(&mut minus)[k] -= eps;
            let lp = -oracle_posterior(variant, &plus, rows)[y].ln();
            let lm = -oracle_posterior(variant, &minus, rows)[y].ln();
            (lp - lm) / (2.0 * eps)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Student t density integrated with composite Simpson's rule.
pub fn t_cdf(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    let norm = (ln_gamma_half(df + 1) - ln_gamma_half(df)).exp() / (nu * std::f64::consts::PI).sqrt();
    let density = |x: f64| norm * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let steps = 20_000;
    let hstep = t.abs() / steps as f64;
    let mut area = density(0.0) + density(t.abs());
    for i in 1..steps {
        area += density(i as f64 * hstep) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = area * hstep / 3.0;
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// `ln Gamma(k / 2)` for a positive integer `k`.
fn ln_gamma_half(k: usize) -> f64 {
    let (mut z, mut acc) = if k % 2 == 0 { (1.0, 0.0) } else { (0.5, 0.5 * std::f64::consts::PI.ln()) };
    while z < k as f64 / 2.0 {
        acc += z.ln();
        z += 1.0;
    }
    acc
}

/// Two-sided critical value by bisection on the integrated density.
pub fn t_critical(level: f64, df: usize) -> f64 {
    let target = 0.5 + level / 2.0;
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(t, df)` of the paired test on `a - b` from the textbook formula.
pub fn paired_t(a: &[f64], b: &[f64]) -> (f64, usize) {
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean / (var.sqrt() / n.sqrt()), a.len() - 1)
}

/// Precision and recall at `threshold` by direct counting.
pub fn precision_recall(results: &[(f64, bool)], threshold: f64) -> (f64, f64) {
    let accepted: Vec<&(f64, bool)> = results.iter().filter(|r| r.0 >= threshold).collect();
    let hits = accepted.iter().filter(|r| r.1).count() as f64;
    let precision = if accepted.is_empty() { 1.0 } else { hits / accepted.len() as f64 };
    (precision, hits / results.len() as f64)
}

/// miGraph kernel by direct double summation over instance pairs, with
/// clique weights `1 / #{u : ||x_s - x_u|| < sigma}` (the instance itself
/// always counts).
pub fn migraph_direct(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, sigma: impl Fn(&[Vec<f64>]) -> f64) -> f64 {
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let weights = |set: &[Vec<f64>]| -> Vec<f64> {
        let s = sigma(set);
        set.iter()
            .enumerate()
            .map(|(i, x)| 1.0 / set.iter().enumerate().filter(|(k, y)| *k == i || dist(x, y) < s).count() as f64)
            .collect()
    };
    let (wa, wb) = (weights(a), weights(b));
    let mut num = 0.0;
    for (x, p) in a.iter().zip(&wa) {
        for (y, q) in b.iter().zip(&wb) {
            num += p * q * (-gamma * dist(x, y).powi(2)).exp();
        }
    }
    num / (wa.iter().sum::<f64>() * wb.iter().sum::<f64>())
}

/// Mean pairwise distance within a set (the adaptive miGraph threshold).
pub fn mean_pairwise_distance(set: &[Vec<f64>]) -> f64 {
    let n = set.len();
    let mut total = 0.0;
    for i in 0..n {
        for k in 0..n {
            if i != k {
                total += set[i].iter().zip(&set[k]).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            }
        }
    }
    total / (n * (n - 1)) as f64
}

/// Local (max) set kernel: every instance's best Gaussian match in the
/// other set, averaged within each direction, then over the two directions.
pub fn max_kernel_direct(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| (-gamma * x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).exp();
    let best = |x: &[f64], set: &[Vec<f64>]| set.iter().map(|y| k(x, y)).fold(f64::NEG_INFINITY, f64::max);
    let ab = a.iter().map(|x| best(x, b)).sum::<f64>() / a.len() as f64;
    let ba = b.iter().map(|y| best(y, a)).sum::<f64>() / b.len() as f64;
    0.5 * (ab + ba)
}
