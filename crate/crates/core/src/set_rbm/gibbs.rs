//! Hidden-group conditionals, Gibbs sampling, and contrastive divergence for
//! the set models.

use ndarray::{Array1, Array2};

use super::{check_bag, instance_preactivations, Family};
use crate::class_rbm::{sample_class, sample_visible};
use crate::data::Bag;
use crate::error::{Error, Result};
use crate::numerics::{raw, RngStream};
use crate::params::RbmParams;

/// Softmax over `{none, 1..n}` with logit 0 for `none`.
fn group_distribution(logits: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = std::iter::once(0.0).chain(logits).collect();
    raw::softmax_in_place(&mut v);
    v
}

fn check_hidden(params: &RbmParams, j: usize) -> Result<()> {
    if j >= params.hidden() {
        return Err(Error::invalid(format!("hidden index {j} >= {}", params.hidden())));
    }
    Ok(())
}

/// Distribution of the XOR group `{h_j^(s)}` over `{none, 1..|X|}`; entry 0
/// is "no copy active", entry `s + 1` is "copy `s` active".
pub fn xor_hidden_conditional(params: &RbmParams, bag: &Bag, y: usize, j: usize) -> Result<Vec<f64>> {
    check_bag(params, bag)?;
    params.check_class(y)?;
    check_hidden(params, j)?;
    let a = instance_preactivations(params, bag);
    let uy = params.u[[j, y]];
    Ok(group_distribution(a.column(j).iter().map(|&v| v + uy)))
}

/// The two-stage OR conditional for hidden index `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrConditionals {
    /// Distribution of `g_j` over `{none, 1..|X|}`.
    pub g: Vec<f64>,
    /// `p(h_j^(s) = 1 | g_j^(s) = 0, x^(s)) = sigm(c_j + W_j. x^(s))`; when
    /// `g_j^(s) = 1` the copy is on with certainty.
    pub h_given_g_off: Vec<f64>,
}

impl OrConditionals {
    /// `p(h_j^(s) = 1 | X, y)` with `g` summed out.
    pub fn h_marginal(&self) -> Vec<f64> {
        self.h_given_g_off
            .iter()
            .enumerate()
            .map(|(s, &q)| {
                let pg = self.g[s + 1];
                pg + (1.0 - pg) * q
            })
            .collect()
    }
}

pub fn or_hidden_conditionals(params: &RbmParams, bag: &Bag, y: usize, j: usize) -> Result<OrConditionals> {
    check_bag(params, bag)?;
    params.check_class(y)?;
    check_hidden(params, j)?;
    let a = instance_preactivations(params, bag);
    let uy = params.u[[j, y]];
    let col = a.column(j);
    Ok(OrConditionals {
        g: group_distribution(col.iter().map(|&v| raw::softminus(v) + uy)),
        h_given_g_off: col.iter().map(|&v| raw::sigmoid(v)).collect(),
    })
}

/// Result of one Gibbs step from a training bag. Matrices are `|X| × H`
/// (hidden) or `|X| × D` (inputs); the `g_*` fields are present for OR only.
#[derive(Debug, Clone, PartialEq)]
pub struct SetGibbsParticle {
    pub x_neg: Array2<f64>,
    pub y_neg: usize,
    pub h_pos: Array2<f64>,
    pub h_neg: Array2<f64>,
    pub g_pos: Option<Array2<f64>>,
    pub g_neg: Option<Array2<f64>>,
    /// The sampled hidden configuration `H`.
    pub h_sample: Array2<f64>,
    /// The sampled `G` (OR only).
    pub g_sample: Option<Array2<f64>>,
}

/// Per-instance hidden probabilities `(h, g)` conditioned on `(X, y)`.
/// XOR: `h_j^(s)` is the group probability of copy `s`. OR: `g` is the
/// group probability and `h` its marginal.
fn hidden_statistics(
    family: Family,
    params: &RbmParams,
    a: &Array2<f64>,
    y: usize,
) -> (Array2<f64>, Option<Array2<f64>>, Vec<Vec<f64>>) {
    let (n, h) = a.dim();
    let mut hp = Array2::zeros((n, h));
    let mut gp = match family {
        Family::Xor => None,
        Family::Or => Some(Array2::zeros((n, h))),
    };
    let mut groups = Vec::with_capacity(h);
    for j in 0..h {
        let col = a.column(j);
        let uy = params.u[[j, y]];
        match family {
            Family::Xor => {
                let dist = group_distribution(col.iter().map(|&v| v + uy));
                for s in 0..n {
                    hp[[s, j]] = dist[s + 1];
                }
                groups.push(dist);
            }
            Family::Or => {
                let dist = group_distribution(col.iter().map(|&v| raw::softminus(v) + uy));
                let g = gp.as_mut().expect("OR has g");
                for s in 0..n {
                    let pg = dist[s + 1];
                    g[[s, j]] = pg;
                    hp[[s, j]] = pg + (1.0 - pg) * raw::sigmoid(col[s]);
                }
                groups.push(dist);
            }
        }
    }
    (hp, gp, groups)
}

/// One Gibbs step started at `(X, y)`.
///
/// Draw order: one group draw per hidden index `j` (ascending); for OR, then
/// the free `h` bits row by row; then the visible bits of each instance in
/// order; then the class.
pub fn set_gibbs_step(
    family: Family,
    params: &RbmParams,
    bag: &Bag,
    y: usize,
    rng: &mut RngStream,
) -> Result<SetGibbsParticle> {
    check_bag(params, bag)?;
    params.check_class(y)?;
    let (n, hdim) = (bag.len(), params.hidden());
    let a = instance_preactivations(params, bag);
    let (h_pos, g_pos, groups) = hidden_statistics(family, params, &a, y);

    let mut h_sample = Array2::zeros((n, hdim));
    let mut selections = Vec::with_capacity(hdim);
    for (j, dist) in groups.iter().enumerate() {
        let pick = rng.categorical(dist);
        if pick > 0 {
            h_sample[[pick - 1, j]] = 1.0;
        }
        selections.push(pick);
    }

    // Class units connect to H for XOR and to G for OR.
    let (class_driver, g_sample) = match family {
        Family::Xor => (h_sample.clone(), None),
        Family::Or => {
            let g_sample = h_sample.clone();
            for s in 0..n {
                for j in 0..hdim {
                    if g_sample[[s, j]] == 0.0 && rng.bernoulli(raw::sigmoid(a[[s, j]])) {
                        h_sample[[s, j]] = 1.0;
                    }
                }
            }
            (g_sample.clone(), Some(g_sample))
        }
    };

    let mut x_neg = Array2::zeros((n, params.inputs()));
    for s in 0..n {
        let xs = sample_visible(params, h_sample.row(s), rng);
        x_neg.row_mut(s).assign(&xs);
    }
    let summed: Array1<f64> = class_driver.sum_axis(ndarray::Axis(0));
    let y_neg = sample_class(params, summed.view(), rng);

    let neg_bag = Bag::new(bag.id.clone(), y_neg, x_neg.clone())?;
    let a_neg = instance_preactivations(params, &neg_bag);
    let (h_neg, g_neg, _) = hidden_statistics(family, params, &a_neg, y_neg);

    Ok(SetGibbsParticle {
        x_neg,
        y_neg,
        h_pos,
        h_neg,
        g_pos,
        g_neg,
        h_sample,
        g_sample,
    })
}

/// CD-1 update for a given particle, summing per-instance statistics over
/// the bag. The class weights use `h` statistics for XOR and `g` for OR.
pub fn apply_set_cd(params: &mut RbmParams, bag: &Bag, y: usize, particle: &SetGibbsParticle, rate: f64) {
    let (pos_class, neg_class) = match (&particle.g_pos, &particle.g_neg) {
        (Some(gp), Some(gn)) => (gp, gn),
        _ => (&particle.h_pos, &particle.h_neg),
    };
    for s in 0..bag.len() {
        let x = bag.instance(s);
        let xn = particle.x_neg.row(s);
        params.b.scaled_add(rate, &x);
        params.b.scaled_add(-rate, &xn);
        for j in 0..params.hidden() {
            let (hp, hn) = (particle.h_pos[[s, j]], particle.h_neg[[s, j]]);
            params.c[j] += rate * (hp - hn);
            let mut row = params.w.row_mut(j);
            row.scaled_add(rate * hp, &x);
            row.scaled_add(-rate * hn, &xn);
            params.u[[j, y]] += rate * pos_class[[s, j]];
            params.u[[j, particle.y_neg]] -= rate * neg_class[[s, j]];
        }
    }
    params.d[y] += rate;
    params.d[particle.y_neg] -= rate;
}

pub fn set_cd_update(
    family: Family,
    params: &RbmParams,
    bag: &Bag,
    y: usize,
    rate: f64,
    rng: &mut RngStream,
) -> Result<RbmParams> {
    if !(rate >= 0.0) {
        return Err(Error::invalid(format!("negative learning rate {rate}")));
    }
    let mut next = params.clone();
    if rate == 0.0 {
        return Ok(next);
    }
    let particle = set_gibbs_step(family, params, bag, y, rng)?;
    apply_set_cd(&mut next, bag, y, &particle, rate);
    Ok(next)
}
