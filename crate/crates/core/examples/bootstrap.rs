//! Paired bootstrap test between two systems' per-record scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use covrelax::bootstrap::{bootstrap_test_seeded, DEFAULT_RESAMPLES};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<f64> = (0..200).map(|_| rng.random_range(0.1..0.5)).collect();
    for gain in [0.0, 0.005, 0.02] {
        let better: Vec<f64> = base.iter().map(|x| x + gain + rng.random_range(-0.05..0.05)).collect();
        let p = bootstrap_test_seeded(&better, &base, DEFAULT_RESAMPLES, 1).unwrap();
        println!("mean gain {gain:.3}: p = {p:.4}");
    }
}
