//! REINFORCE and RELAX against the exact gradient of a three-token,
//! two-step policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use covrelax::cli::ToyTask;
use covrelax::control_variate::CvParams;
use covrelax::coverage_reward::RewardConfig;
use covrelax::estimators::{estimator_statistics, exact_gradient_oracle, CoverageReward, Estimator, Task};
use covrelax::policy::Forcing;

fn main() {
    let toy = ToyTask::new(3, 2, 0).unwrap();
    let reward = CoverageReward { reference: &toy.reference, docs: &toy.docs, cfg: RewardConfig::default() };
    let task = Task {
        bag: &toy.bag,
        reference: &toy.reference,
        reward: &reward,
        decode: toy.decode(),
        forcing: Forcing::Student,
    };
    let oracle = exact_gradient_oracle(&toy.policy, &task).unwrap();
    println!("E[reward] = {:.4} over {} sequences", oracle.expected_reward, oracle.sequences);

    let cv = CvParams::random(3, 32, 0.5, &mut ChaCha8Rng::seed_from_u64(2));
    let n = 50_000;
    let reinforce = estimator_statistics(Estimator::Reinforce, &toy.policy, &task, n, 0, Some(&oracle)).unwrap();
    let relax =
        estimator_statistics(Estimator::Relax { cv: &cv, log_tau: 0.5 }, &toy.policy, &task, n, 1 << 32, Some(&oracle))
            .unwrap();

    println!("{:<20} {:>10} {:>10} {:>8} {:>10} {:>8}", "coordinate", "exact", "reinforce", "z", "relax", "z");
    let (zr, zx) = (reinforce.z_scores().unwrap(), relax.z_scores().unwrap());
    let exact = oracle.loss_grad();
    for i in (0..exact.len()).step_by(3) {
        println!(
            "{:<20} {:>10.5} {:>10.5} {:>8.2} {:>10.5} {:>8.2}",
            reinforce.labels[i], exact[i], reinforce.mean[i], zr[i], relax.mean[i], zx[i]
        );
    }
}
