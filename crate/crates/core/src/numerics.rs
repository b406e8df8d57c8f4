//! Numerically stable scalar primitives and the seeded randomness contract.
//!
//! The checked functions at module level validate their inputs and are what
//! callers outside the crate should use. The [`raw`] submodule holds the same
//! formulas without validation for inner loops that already guarantee finite
//! arguments.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub mod raw {
    /// `log(1 + exp(v))` as `max(v, 0) + log1p(exp(-|v|))`.
    #[inline]
    pub fn softplus(v: f64) -> f64 {
        v.max(0.0) + (-v.abs()).exp().ln_1p()
    }

    /// `v - softplus(v)`, evaluated as `-softplus(-v)` to avoid cancellation.
    #[inline]
    pub fn softminus(v: f64) -> f64 {
        -softplus(-v)
    }

    #[inline]
    pub fn sigmoid(v: f64) -> f64 {
        if v >= 0.0 {
            1.0 / (1.0 + (-v).exp())
        } else {
            let e = v.exp();
            e / (1.0 + e)
        }
    }

    /// Max-shifted log-sum-exp. Returns `-inf` for an empty slice.
    #[inline]
    pub fn log_sum_exp(values: &[f64]) -> f64 {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
        max + sum.ln()
    }

    /// Normalizes `logits` into a probability vector in place.
    pub fn softmax_in_place(logits: &mut [f64]) {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in logits.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in logits.iter_mut() {
            *v /= total;
        }
    }

    /// Index of the largest value, lowest index on ties.
    pub fn argmax(values: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            if v > values[best] {
                best = i;
            }
        }
        best
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("{what}: non-finite input {v}")))
    }
}

pub fn softplus(v: f64) -> Result<f64> {
    finite(v, "softplus").map(raw::softplus)
}

pub fn softminus(v: f64) -> Result<f64> {
    finite(v, "softminus").map(raw::softminus)
}

pub fn sigmoid(v: f64) -> Result<f64> {
    finite(v, "sigmoid").map(raw::sigmoid)
}

pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("log_sum_exp: empty input"));
    }
    for &v in values {
        finite(v, "log_sum_exp")?;
    }
    Ok(raw::log_sum_exp(values))
}

/// Draws 1 with probability `p`, consuming exactly one uniform.
pub fn bernoulli(p: f64, rng: &mut RngStream) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("bernoulli: p = {p} outside [0, 1]")));
    }
    Ok(rng.bernoulli(p))
}

/// Draws index `i` with probability `w_i / sum(w)`.
pub fn categorical(weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::invalid("categorical: empty weights"));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::invalid("categorical: negative or non-finite weight"));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::invalid("categorical: weights sum to zero"));
    }
    Ok(rng.categorical(weights))
}

/// A seeded ChaCha8 stream.
///
/// `(seed, stream_id)` fully determines the draw sequence. Child streams are
/// derived by mixing a label into the stream id with SplitMix64, so a fold
/// or grid point gets the same stream regardless of scheduling order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream labelled by `label`. Does not advance `self`.
    pub fn derive(&self, label: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(label.wrapping_add(1)));
        RngStream::new(self.seed, id)
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    #[inline]
    pub(crate) fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Unvalidated categorical draw; weights must be non-negative with a
    /// positive sum.
    pub(crate) fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last_positive = i;
                if target < acc {
                    return i;
                }
            }
        }
        last_positive
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_examples() {
        assert!((softplus(0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(1000.0).unwrap() - 1000.0).abs() < 1e-12);
        // log1p(exp(-3)) = 0.048587351573741958...
        assert!((softplus(-3.0).unwrap() - 0.048_587_351_573_741_96).abs() < 1e-15);
        assert!(softplus(f64::NAN).is_err());
        assert!(softplus(f64::INFINITY).is_err());
    }

    #[test]
    fn softminus_examples() {
        assert!((softminus(0.0).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softminus(5.0).unwrap() + softplus(-5.0).unwrap()).abs() < 1e-14);
        assert!((softminus(-1000.0).unwrap() + 1000.0).abs() < 1e-12);
        assert!(softminus(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0).unwrap(), 0.5);
        assert_eq!(sigmoid(1e4).unwrap(), 1.0);
        assert!((sigmoid(3f64.ln()).unwrap() - 0.75).abs() < 1e-15);
        assert!(sigmoid(f64::NAN).is_err());
    }

    #[test]
    fn log_sum_exp_examples() {
        assert_eq!(log_sum_exp(&[-7.25]).unwrap(), -7.25);
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn bernoulli_edges_and_frequency() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..1000 {
            assert!(!bernoulli(0.0, &mut rng).unwrap());
            assert!(bernoulli(1.0, &mut rng).unwrap());
        }
        let n = 100_000;
        let hits = (0..n).filter(|_| bernoulli(0.3, &mut rng).unwrap()).count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.01);
        assert!(bernoulli(1.5, &mut rng).is_err());
        assert!(bernoulli(-0.1, &mut rng).is_err());
    }

    #[test]
    fn categorical_edges_and_frequency() {
        let mut rng = RngStream::new(5, 2);
        for _ in 0..1000 {
            assert_eq!(categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
            assert_eq!(categorical(&[0.0, 5.0], &mut rng).unwrap(), 1);
        }
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[categorical(&[1.0, 1.0, 2.0], &mut rng).unwrap()] += 1;
        }
        for (c, expected) in counts.iter().zip([0.25, 0.25, 0.5]) {
            assert!((*c as f64 / n as f64 - expected).abs() < 0.01);
        }
        assert!(categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(categorical(&[1.0, -1.0], &mut rng).is_err());
        assert!(categorical(&[], &mut rng).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);

        let root = RngStream::new(42, 0);
        let mut c1 = root.derive(1);
        let mut c2 = root.derive(2);
        let zs: Vec<u64> = (0..16).map(|_| c1.next_u64()).collect();
        let ws: Vec<u64> = (0..16).map(|_| c2.next_u64()).collect();
        assert_ne!(zs, ws);
        assert_eq!(root.derive(1).next_u64(), zs[0]);
    }

    mod props {
        use super::super::raw;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softminus_is_negated_softplus(v in -1e6f64..1e6) {
                let a = raw::softminus(v);
                let b = -raw::softplus(-v);
                prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300));
            }

            #[test]
            fn sigmoid_is_exp_softminus(v in -700f64..700.0) {
                let s = raw::sigmoid(v);
                let e = raw::softminus(v).exp();
                prop_assert!((s - e).abs() <= 1e-12 * s.abs().max(1e-300));
                prop_assert!((raw::sigmoid(v) + raw::sigmoid(-v) - 1.0).abs() <= 1e-15);
            }

            #[test]
            fn log_sum_exp_of_copies(a in -1e6f64..1e6, n in 1usize..50) {
                let lse = raw::log_sum_exp(&vec![a; n]);
                prop_assert!((lse - (a + (n as f64).ln())).abs() <= 1e-12 * a.abs().max(1.0));
            }

            #[test]
            fn log_sum_exp_shift(values in prop::collection::vec(-1e3f64..1e3, 1..10), k in -1e3f64..1e3) {
                let shifted: Vec<f64> = values.iter().map(|v| v + k).collect();
                let lhs = raw::log_sum_exp(&shifted);
                let rhs = raw::log_sum_exp(&values) + k;
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
            }

            #[test]
            fn primitives_stay_finite(v in -1e6f64..1e6) {
                prop_assert!(raw::softplus(v).is_finite());
                prop_assert!(raw::softminus(v).is_finite());
                prop_assert!(raw::sigmoid(v).is_finite());
                prop_assert!(raw::log_sum_exp(&[v, -v]).is_finite());
            }
        }
    }
}
