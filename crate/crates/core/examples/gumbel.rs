//! Gumbel-Softmax samples at several temperatures, and the conditional
//! sample that shares the hard token.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use covrelax::gumbel::sample_relaxed;

fn main() {
    let probs = [0.5f64, 0.3, 0.15, 0.05];
    let log_probs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for log_tau in [-2.0, 0.0, 0.5, 2.0] {
        let s = sample_relaxed(&log_probs, log_tau, &mut rng);
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("log tau {log_tau:>4}: token {}  z [{}]  z~ [{}]", s.hard_token, fmt(&s.z), fmt(&s.z_tilde));
    }

    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[sample_relaxed(&log_probs, 0.5, &mut rng).hard_token as usize] += 1;
    }
    println!("argmax frequencies over {n} draws vs probabilities:");
    for (c, p) in counts.iter().zip(probs) {
        println!("  {:.4} vs {p}", *c as f64 / n as f64);
    }
}
