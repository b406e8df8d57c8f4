//! Posterior by explicit enumeration of the constrained hidden states.
//!
//! The joint `sum_{H,G} exp(-E(X, y, H, G))` factorizes over hidden index
//! `j`, so each class score is a product of per-`j` sums over the valid
//! configurations of one group. Nothing here goes through the free-energy
//! formulas; the sums are formed directly from the energy.

use super::{check_bag, Family};
use crate::data::Bag;
use crate::error::{Error, Result};
use crate::params::RbmParams;

pub const MAX_HIDDEN: usize = 4;
pub const MAX_INSTANCES: usize = 4;
pub const MAX_INPUTS: usize = 6;
pub const MAX_CLASSES: usize = 3;

/// The valid states of one hidden group over `n` instances, as
/// `(g selection, h bitmask)`.
///
/// XOR has no `G` layer; its states are "none" or exactly one `h^(s)` on,
/// reported as `(None, 0)` and `(Some(s), 1 << s)`. OR pairs every `g`
/// selection with every `h` mask satisfying `h >= g`.
pub fn group_configurations(family: Family, n: usize) -> Vec<(Option<usize>, u32)> {
    match family {
        Family::Xor => std::iter::once((None, 0))
            .chain((0..n).map(|s| (Some(s), 1u32 << s)))
            .collect(),
        Family::Or => {
            let mut out = Vec::new();
            for g in std::iter::once(None).chain((0..n).map(Some)) {
                for mask in 0u32..(1 << n) {
                    if g.is_none_or(|s| mask & (1 << s) != 0) {
                        out.push((g, mask));
                    }
                }
            }
            out
        }
    }
}

pub fn brute_force_posterior(family: Family, params: &RbmParams, bag: &Bag) -> Result<Vec<f64>> {
    check_bag(params, bag)?;
    let (d, h, c, n) = (params.inputs(), params.hidden(), params.classes(), bag.len());
    if h > MAX_HIDDEN || n > MAX_INSTANCES || d > MAX_INPUTS || c > MAX_CLASSES {
        return Err(Error::invalid(format!(
            "enumeration budget exceeded: H={h} (<= {MAX_HIDDEN}), |X|={n} (<= {MAX_INSTANCES}), \
             D={d} (<= {MAX_INPUTS}), C={c} (<= {MAX_CLASSES})"
        )));
    }

    // Per-instance input-to-hidden energies, accumulated term by term.
    let mut act = vec![vec![0.0; h]; n];
    for (s, row) in act.iter_mut().enumerate() {
        let x = bag.instance(s);
        for (j, a) in row.iter_mut().enumerate() {
            let mut v = params.c[j];
            for i in 0..d {
                v += params.w[[j, i]] * x[i];
            }
            *a = v;
        }
    }
    let visible: f64 = (0..n)
        .map(|s| (0..d).map(|i| params.b[i] * bag.instance(s)[i]).sum::<f64>())
        .sum();

    let configs = group_configurations(family, n);
    let mut log_scores = Vec::with_capacity(c);
    for y in 0..c {
        let mut log_score = params.d[y] + visible;
        for j in 0..h {
            let mut z = 0.0;
            for &(g, mask) in &configs {
                let mut neg_energy = 0.0;
                for (s, a) in act.iter().enumerate() {
                    if mask & (1 << s) != 0 {
                        neg_energy += a[j];
                    }
                }
                // XOR couples the active h copy to y; OR couples the g copy.
                if g.is_some() {
                    neg_energy += params.u[[j, y]];
                }
                z += neg_energy.exp();
            }
            log_score += z.ln();
        }
        log_scores.push(log_score);
    }

    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_scores.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}
