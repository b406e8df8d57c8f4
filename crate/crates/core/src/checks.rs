//! Self-checks exposed on the command line: finite-difference gradient
//! checks and posterior-versus-enumeration checks.

use serde::Serialize;

use crate::data::Bag;
use crate::error::Result;
use crate::model::{ModelVariant, RbmModel};
use crate::numerics::RngStream;
use crate::params::{Block, RbmParams};
use crate::set_rbm::{brute_force_posterior, set_posterior, Family, Pooling, SetVariant};

pub const FD_STEP: f64 = 1e-5;
/// Gradient entries smaller than this are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckSummary {
    pub trials: usize,
    pub max_relative_error: f64,
}

fn random_bag(rng: &mut RngStream, inputs: usize, max_size: usize, label: usize) -> Bag {
    let n = 1 + (rng.next_u64() % max_size as u64) as usize;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..inputs).map(|_| rng.uniform()).collect()).collect();
    Bag::from_rows("check", label, &rows).expect("non-empty bag")
}

fn small_dim(rng: &mut RngStream, max: usize) -> usize {
    1 + (rng.next_u64() % max as u64) as usize
}

/// Compares the analytic discriminative gradient of `variant` with central
/// differences of `-log p(y | X)` on `trials` random problems.
pub fn gradient_check(variant: ModelVariant, trials: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = RngStream::new(seed, 0x9c);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (d, h, c) = (small_dim(&mut rng, 5), small_dim(&mut rng, 5), 1 + small_dim(&mut rng, 2));
        let params = RbmParams::random(d, h, c, 1.0, &mut rng);
        let y = (rng.next_u64() % c as u64) as usize;
        let max_size = if variant == ModelVariant::ClassRbm { 1 } else { 4 };
        let bag = random_bag(&mut rng, d, max_size, y);
        let model = RbmModel::new(variant, params);
        let analytic = model.disc_gradient(&bag, y)?;
        let loss = |p: &RbmParams| -> Result<f64> {
            let m = RbmModel::new(variant, p.clone());
            Ok(-crate::model::BagClassifier::posterior(&m, &bag)?[y].ln())
        };
        for block in Block::ALL {
            for i in 0..model.params.block(block).len() {
                let mut plus = model.params.clone();
                plus.block_mut(block)[i] += FD_STEP;
                let mut minus = model.params.clone();
                minus.block_mut(block)[i] -= FD_STEP;
                let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * FD_STEP);
                worst = worst.max(relative_error(analytic.block(block)[i], numeric));
            }
        }
    }
    Ok(CheckSummary { trials, max_relative_error: worst })
}

/// Compares the soft-pooling posterior with explicit enumeration on random
/// problems with H <= 3, |X| <= 4, D <= 5, C <= 3 and parameters in
/// `[-2, 2]`.
pub fn oracle_check(family: Family, trials: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = RngStream::new(seed, 0x0c);
    let variant = SetVariant::new(family, Pooling::Soft);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (d, h, c) = (small_dim(&mut rng, 5), small_dim(&mut rng, 3), 1 + small_dim(&mut rng, 2));
        let params = RbmParams::random(d, h, c, 2.0, &mut rng);
        let bag = random_bag(&mut rng, d, 4, 0);
        let fast = set_posterior(variant, &params, &bag)?;
        let slow = brute_force_posterior(family, &params, &bag)?;
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    Ok(CheckSummary { trials, max_relative_error: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradients_agree() {
        for v in [ModelVariant::ClassRbm]
            .into_iter()
            .chain(SetVariant::ALL.into_iter().map(ModelVariant::Set))
        {
            let s = gradient_check(v, 5, 1).unwrap();
            assert!(s.max_relative_error <= 1e-4, "{v}: {}", s.max_relative_error);
        }
    }

    #[test]
    fn oracle_agrees() {
        for f in [Family::Xor, Family::Or] {
            assert!(oracle_check(f, 20, 3).unwrap().max_relative_error <= 1e-10);
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1e-12, 0.0), 1e-6);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }
}
