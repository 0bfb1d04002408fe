//! Train the control variate and temperature to shrink the estimator's
//! second moment, then compare per-coordinate variances with REINFORCE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use covrelax::cli::ToyTask;
use covrelax::control_variate::CvParams;
use covrelax::coverage_reward::RewardConfig;
use covrelax::estimators::{estimator_statistics, fit_control_variate, CoverageReward, Estimator, Task};
use covrelax::gumbel::TemperatureParam;
use covrelax::policy::Forcing;
use covrelax::trainer::moving_average;

fn main() {
    let toy = ToyTask::new(3, 2, 0).unwrap();
    let reward = CoverageReward { reference: &toy.reference, docs: &toy.docs, cfg: RewardConfig::with_beta(0.0) };
    let task = Task {
        bag: &toy.bag,
        reference: &toy.reference,
        reward: &reward,
        decode: toy.decode(),
        forcing: Forcing::Student,
    };

    let mut cv = CvParams::random(3, 32, 0.5, &mut ChaCha8Rng::seed_from_u64(0xc0));
    let mut temp = TemperatureParam::default();
    let trace = fit_control_variate(&toy.policy, &mut cv, &mut temp, &task, 2000, 1e-2, 7).unwrap();
    let ma = moving_average(&trace, 200);
    for step in [199, 999, 1999] {
        println!("step {:>4}: mean squared gradient norm {:.4}", step + 1, ma[step]);
    }
    println!("log tau after training: {:.3}", temp.log_tau);

    let n = 20_000;
    let reinforce = estimator_statistics(Estimator::Reinforce, &toy.policy, &task, n, 0, None).unwrap();
    let relax =
        estimator_statistics(Estimator::Relax { cv: &cv, log_tau: temp.log_tau }, &toy.policy, &task, n, 1 << 32, None)
            .unwrap();
    let lower = reinforce.variance.iter().zip(&relax.variance).filter(|(r, x)| x < r).count();
    let total = |v: &[f64]| v.iter().sum::<f64>();
    println!(
        "relax variance below reinforce on {lower}/{} coordinates; total variance {:.4} vs {:.4}",
        relax.variance.len(),
        total(&relax.variance),
        total(&reinforce.variance)
    );
}
