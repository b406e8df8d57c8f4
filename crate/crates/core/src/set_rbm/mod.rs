//! Classification RBMs over sets of vectors.
//!
//! Every instance of a bag gets its own copy of the hidden layer, tied to
//! the shared weights `W`. The two families differ in how those copies
//! interact with the class units:
//!
//! * **XOR**: for each hidden index `j`, at most one copy `h_j^(s)` may be
//!   active across the whole bag.
//! * **OR**: a second layer `G` carries the class connections; at most one
//!   `g_j^(s)` is active per `j`, and `g_j^(s) = 1` forces `h_j^(s) = 1`.
//!
//! Summing out the hidden units leaves a free energy of the same shape as
//! the single-vector model, with the hidden pre-activation replaced by a
//! pooled quantity over the bag:
//!
//! ```text
//! F(X, y) = -d_y - sum_j softplus(pool_j(X) + U_jy)
//! pool_j(X) = log sum_s exp(t_j^(s))      (Soft)
//!           = max_s t_j^(s)               (HardMax)
//! t_j^(s)   = c_j + W_j. x^(s)            (XOR)
//!           = softminus(c_j + W_j. x^(s)) (OR)
//! ```
//!
//! HardMax pooling changes only the posterior and its gradient; sampling and
//! contrastive divergence always use the exact (soft) conditionals.

mod gibbs;
mod oracle;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::class_rbm::{free_energy_from_pre, head_gradient, posterior_from_pre};
use crate::data::Bag;
use crate::error::{Error, Result};
use crate::numerics::raw;
use crate::params::{Gradients, RbmParams};

pub use gibbs::{
    apply_set_cd, or_hidden_conditionals, set_cd_update, set_gibbs_step, xor_hidden_conditional,
    OrConditionals, SetGibbsParticle,
};
pub use oracle::{brute_force_posterior, group_configurations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Xor,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Soft,
    #[serde(rename = "hardmax")]
    HardMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetVariant {
    pub family: Family,
    pub pooling: Pooling,
}

impl SetVariant {
    pub const ALL: [SetVariant; 4] = [
        SetVariant::new(Family::Xor, Pooling::Soft),
        SetVariant::new(Family::Xor, Pooling::HardMax),
        SetVariant::new(Family::Or, Pooling::Soft),
        SetVariant::new(Family::Or, Pooling::HardMax),
    ];

    pub const fn new(family: Family, pooling: Pooling) -> Self {
        Self { family, pooling }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Xor => "xor",
            Family::Or => "or",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor" => Ok(Family::Xor),
            "or" => Ok(Family::Or),
            other => Err(Error::invalid(format!("unknown family {other:?} (expected xor or or)"))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Soft => "soft",
            Pooling::HardMax => "hardmax",
        })
    }
}

impl fmt::Display for SetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pooling = match self.pooling {
            Pooling::Soft => "soft",
            Pooling::HardMax => "hard",
        };
        write!(f, "set-{}-{pooling}", self.family)
    }
}

fn check_bag(params: &RbmParams, bag: &Bag) -> Result<()> {
    if bag.dim() != params.inputs() {
        return Err(Error::invalid(format!(
            "bag {} dimension {} != model dimension {}",
            bag.id,
            bag.dim(),
            params.inputs()
        )));
    }
    Ok(())
}

/// `a[s][j] = c_j + W_j. x^(s)`, computed row by row in the same order as
/// the single-vector model.
pub(crate) fn instance_preactivations(params: &RbmParams, bag: &Bag) -> Array2<f64> {
    let (n, h) = (bag.len(), params.hidden());
    let mut a = Array2::zeros((n, h));
    for (s, x) in bag.instances().rows().into_iter().enumerate() {
        for (j, w) in params.w.rows().into_iter().enumerate() {
            a[[s, j]] = params.c[j] + w.dot(&x);
        }
    }
    a
}

#[inline]
pub(crate) fn pooled_term(family: Family, a: f64) -> f64 {
    match family {
        Family::Xor => a,
        Family::Or => raw::softminus(a),
    }
}

/// Derivative of the per-instance term with respect to `a`.
#[inline]
fn pooled_term_slope(family: Family, a: f64) -> f64 {
    match family {
        Family::Xor => 1.0,
        Family::Or => raw::sigmoid(-a),
    }
}

/// Soft pooling sums over sorted terms so that the result does not depend on
/// instance order.
fn pool(pooling: Pooling, terms: &mut [f64]) -> f64 {
    match pooling {
        Pooling::Soft => {
            terms.sort_unstable_by(f64::total_cmp);
            raw::log_sum_exp(terms)
        }
        Pooling::HardMax => terms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Per-hidden-unit pooled activations for the whole bag.
fn pooled_from_pre(variant: SetVariant, pre: &Array2<f64>) -> Vec<f64> {
    let mut buf = Vec::with_capacity(pre.nrows());
    pre.columns()
        .into_iter()
        .map(|col| {
            buf.clear();
            buf.extend(col.iter().map(|&a| pooled_term(variant.family, a)));
            pool(variant.pooling, &mut buf)
        })
        .collect()
}

pub fn pooled_activations(variant: SetVariant, params: &RbmParams, bag: &Bag) -> Result<Vec<f64>> {
    check_bag(params, bag)?;
    Ok(pooled_from_pre(variant, &instance_preactivations(params, bag)))
}

pub fn pooled_activation(variant: SetVariant, params: &RbmParams, bag: &Bag, j: usize) -> Result<f64> {
    check_bag(params, bag)?;
    if j >= params.hidden() {
        return Err(Error::invalid(format!("hidden index {j} >= {}", params.hidden())));
    }
    let pre = instance_preactivations(params, bag);
    let mut terms: Vec<f64> = pre.column(j).iter().map(|&a| pooled_term(variant.family, a)).collect();
    Ok(pool(variant.pooling, &mut terms))
}

/// Free energy up to a class-independent constant (OR drops
/// `sum_s sum_j softplus(a_j^(s))`, which cancels in every posterior).
pub fn set_free_energy(variant: SetVariant, params: &RbmParams, bag: &Bag, y: usize) -> Result<f64> {
    params.check_class(y)?;
    let pooled = pooled_activations(variant, params, bag)?;
    Ok(free_energy_from_pre(params, &pooled, y))
}

pub fn set_posterior(variant: SetVariant, params: &RbmParams, bag: &Bag) -> Result<Vec<f64>> {
    let pooled = pooled_activations(variant, params, bag)?;
    Ok(posterior_from_pre(params, &pooled))
}

/// Exact gradient of `-log p(y | X)` under the variant's pooling.
///
/// Soft pooling spreads each hidden unit's gradient over the instances with
/// softmax weights; HardMax routes it entirely to the arg-max instance, the
/// lowest index winning ties.
pub fn set_disc_gradient(variant: SetVariant, params: &RbmParams, bag: &Bag, y: usize) -> Result<Gradients> {
    check_bag(params, bag)?;
    params.check_class(y)?;
    let pre = instance_preactivations(params, bag);
    let pooled = pooled_from_pre(variant, &pre);
    let head = head_gradient(params, &pooled, y);

    let mut g = Gradients::zeros(params.inputs(), params.hidden(), params.classes());
    g.d = head.d;
    g.u = head.u;
    let n = bag.len();
    let mut weights = vec![0.0; n];
    for j in 0..params.hidden() {
        let gj = head.pre[j];
        if gj == 0.0 {
            continue;
        }
        let col = pre.column(j);
        match variant.pooling {
            Pooling::Soft => {
                for s in 0..n {
                    weights[s] = (pooled_term(variant.family, col[s]) - pooled[j]).exp();
                }
            }
            Pooling::HardMax => {
                let terms: Vec<f64> = col.iter().map(|&a| pooled_term(variant.family, a)).collect();
                weights.fill(0.0);
                weights[raw::argmax(&terms)] = 1.0;
            }
        }
        let mut grow = g.w.row_mut(j);
        for s in 0..n {
            if weights[s] == 0.0 {
                continue;
            }
            let coef = gj * weights[s] * pooled_term_slope(variant.family, col[s]);
            g.c[j] += coef;
            grow.scaled_add(coef, &bag.instance(s));
        }
    }
    Ok(g)
}
