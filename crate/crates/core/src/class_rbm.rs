//! The classification RBM over single vectors.
//!
//! Inputs in `[0, 1]` enter the activations as Bernoulli means. The
//! partition function is never formed; everything goes through free-energy
//! differences between classes.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::numerics::{raw, RngStream};
use crate::params::{Gradients, RbmParams};

/// `c + W x`, the class-independent part of the hidden pre-activation.
pub(crate) fn input_preactivation(params: &RbmParams, x: ArrayView1<f64>) -> Array1<f64> {
    let mut pre = params.c.clone();
    for (j, row) in params.w.rows().into_iter().enumerate() {
        pre[j] += row.dot(&x);
    }
    pre
}

/// Free energy of each class given per-hidden-unit pooled inputs `pre`:
/// `F_c = -d_c - sum_j softplus(pre_j + U_jc)`.
pub(crate) fn free_energies_from_pre(params: &RbmParams, pre: &[f64]) -> Vec<f64> {
    (0..params.classes())
        .map(|c| free_energy_from_pre(params, pre, c))
        .collect()
}

pub(crate) fn free_energy_from_pre(params: &RbmParams, pre: &[f64], y: usize) -> f64 {
    let mut f = -params.d[y];
    for (j, &p) in pre.iter().enumerate() {
        f -= raw::softplus(p + params.u[[j, y]]);
    }
    f
}

pub(crate) fn posterior_from_pre(params: &RbmParams, pre: &[f64]) -> Vec<f64> {
    let mut logits: Vec<f64> = free_energies_from_pre(params, pre).iter().map(|f| -f).collect();
    raw::softmax_in_place(&mut logits);
    logits
}

/// Gradient of `-log p(y | ·)` with respect to `d`, `U`, and the pooled
/// pre-activations.
pub(crate) struct HeadGradient {
    pub d: Array1<f64>,
    pub u: Array2<f64>,
    pub pre: Vec<f64>,
}

pub(crate) fn head_gradient(params: &RbmParams, pre: &[f64], y: usize) -> HeadGradient {
    let (h, c) = (params.hidden(), params.classes());
    let p = posterior_from_pre(params, pre);
    let mut d = Array1::from(p.clone());
    d[y] -= 1.0;
    let mut u = Array2::zeros((h, c));
    let mut grad_pre = vec![0.0; h];
    for j in 0..h {
        for k in 0..c {
            let g = d[k] * raw::sigmoid(pre[j] + params.u[[j, k]]);
            u[[j, k]] = g;
            grad_pre[j] += g;
        }
    }
    HeadGradient { d, u, pre: grad_pre }
}

pub fn free_energy(params: &RbmParams, x: ArrayView1<f64>, y: usize) -> Result<f64> {
    params.check_input(x)?;
    params.check_class(y)?;
    let pre = input_preactivation(params, x);
    Ok(free_energy_from_pre(params, pre.as_slice().expect("contiguous"), y))
}

/// `p(y = c | x)` for every class.
pub fn posterior(params: &RbmParams, x: ArrayView1<f64>) -> Result<Vec<f64>> {
    params.check_input(x)?;
    let pre = input_preactivation(params, x);
    Ok(posterior_from_pre(params, pre.as_slice().expect("contiguous")))
}

/// Exact gradient of `-log p(y | x)`. The `b` block is identically zero.
pub fn disc_gradient(params: &RbmParams, x: ArrayView1<f64>, y: usize) -> Result<Gradients> {
    params.check_input(x)?;
    params.check_class(y)?;
    let pre = input_preactivation(params, x);
    let head = head_gradient(params, pre.as_slice().expect("contiguous"), y);
    let mut g = Gradients::zeros(params.inputs(), params.hidden(), params.classes());
    g.d = head.d;
    g.u = head.u;
    for (j, &gp) in head.pre.iter().enumerate() {
        g.c[j] = gp;
        g.w.row_mut(j).scaled_add(gp, &x);
    }
    Ok(g)
}

/// One step of block Gibbs sampling started at a training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsParticle {
    /// Sampled binary input.
    pub x_neg: Array1<f64>,
    /// Sampled class.
    pub y_neg: usize,
    /// `p(h = 1 | x, y)` at the data.
    pub h_pos: Array1<f64>,
    /// `p(h = 1 | x_neg, y_neg)`.
    pub h_neg: Array1<f64>,
}

pub(crate) fn hidden_probabilities(params: &RbmParams, x: ArrayView1<f64>, y: usize) -> Array1<f64> {
    let mut a = input_preactivation(params, x);
    for (j, v) in a.iter_mut().enumerate() {
        *v = raw::sigmoid(*v + params.u[[j, y]]);
    }
    a
}

/// Samples `x ~ p(x | h)` given the (possibly summed) hidden state feeding
/// each visible unit.
pub(crate) fn sample_visible(params: &RbmParams, h: ArrayView1<f64>, rng: &mut RngStream) -> Array1<f64> {
    let mut x = params.b.clone();
    for (j, &hj) in h.iter().enumerate() {
        if hj != 0.0 {
            x.scaled_add(hj, &params.w.row(j));
        }
    }
    x.mapv_inplace(|a| if rng.bernoulli(raw::sigmoid(a)) { 1.0 } else { 0.0 });
    x
}

/// Samples `y ~ softmax_c(d_c + sum_j h_j U_jc)`.
pub(crate) fn sample_class(params: &RbmParams, h: ArrayView1<f64>, rng: &mut RngStream) -> usize {
    let mut logits = params.d.to_vec();
    for (j, &hj) in h.iter().enumerate() {
        if hj != 0.0 {
            for (k, l) in logits.iter_mut().enumerate() {
                *l += hj * params.u[[j, k]];
            }
        }
    }
    raw::softmax_in_place(&mut logits);
    rng.categorical(&logits)
}

/// Draw order: H hidden bits, then D visible bits, then one class draw.
pub fn gibbs_step(params: &RbmParams, x: ArrayView1<f64>, y: usize, rng: &mut RngStream) -> Result<GibbsParticle> {
    params.check_input(x)?;
    params.check_class(y)?;
    let h_pos = hidden_probabilities(params, x, y);
    let h = h_pos.mapv(|p| if rng.bernoulli(p) { 1.0 } else { 0.0 });
    let x_neg = sample_visible(params, h.view(), rng);
    let y_neg = sample_class(params, h.view(), rng);
    let h_neg = hidden_probabilities(params, x_neg.view(), y_neg);
    Ok(GibbsParticle {
        x_neg,
        y_neg,
        h_pos,
        h_neg,
    })
}

/// Applies the CD-1 update for a given particle in place.
pub fn apply_cd(params: &mut RbmParams, x: ArrayView1<f64>, y: usize, particle: &GibbsParticle, rate: f64) {
    params.b.scaled_add(rate, &x);
    params.b.scaled_add(-rate, &particle.x_neg);
    params.c.scaled_add(rate, &particle.h_pos);
    params.c.scaled_add(-rate, &particle.h_neg);
    params.d[y] += rate;
    params.d[particle.y_neg] -= rate;
    for j in 0..params.hidden() {
        let (hp, hn) = (particle.h_pos[j], particle.h_neg[j]);
        let mut row = params.w.row_mut(j);
        row.scaled_add(rate * hp, &x);
        row.scaled_add(-rate * hn, &particle.x_neg);
        params.u[[j, y]] += rate * hp;
        params.u[[j, particle.y_neg]] -= rate * hn;
    }
}

pub fn cd_update(
    params: &RbmParams,
    x: ArrayView1<f64>,
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
    let particle = gibbs_step(params, x, y, rng)?;
    apply_cd(&mut next, x, y, &particle, rate);
    Ok(next)
}
