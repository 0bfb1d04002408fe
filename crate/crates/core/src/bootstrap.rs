//! Paired bootstrap significance test over per-record scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: usize = 10_000;

/// Two-sided p-value for the mean of `a - b`.
///
/// Record indices are resampled with replacement; `p` is twice the
/// fraction of resampled mean differences whose sign is opposite to (or
/// zero against) the observed one, capped at 1. An observed difference of
/// exactly zero gives `p = 1`.
pub fn bootstrap_test<R: Rng + ?Sized>(a: &[f64], b: &[f64], resamples: usize, rng: &mut R) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples { required: 2, got: a.len() });
    }
    if resamples == 0 {
        return Err(Error::Config("resamples must be at least 1".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    if observed == 0.0 {
        return Ok(1.0);
    }
    let sign = observed.signum();
    let mut against = 0usize;
    for _ in 0..resamples {
        let mut total = 0.0;
        for _ in 0..n {
            total += diffs[rng.random_range(0..n)];
        }
        if total * sign <= 0.0 {
            against += 1;
        }
    }
    Ok((2.0 * against as f64 / resamples as f64).min(1.0))
}

/// [`bootstrap_test`] with a generator seeded from `seed`.
pub fn bootstrap_test_seeded(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    bootstrap_test(a, b, resamples, &mut ChaCha8Rng::seed_from_u64(seed))
}
