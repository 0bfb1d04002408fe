//! NLL pretraining followed by RELAX fine-tuning with the coverage reward
//! on the synthetic corpus.
//!
//! `cargo run --release --example finetune -- [seed]`

use covrelax::config::TrainConfig;
use covrelax::corpus::{synthetic_corpus, SyntheticSpec};
use covrelax::trainer::{evaluate, finetune_rl, moving_average, pretrain_nll, Corpus};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let records = synthetic_corpus(&SyntheticSpec { records: 250, seed, ..Default::default() }).unwrap();
    let cfg = TrainConfig { seed, ..Default::default() };
    let corpus = Corpus::from_records(&records[..200], &records[200..], &cfg).unwrap();

    let pre = pretrain_nll(&cfg, &corpus).unwrap();
    if let Some(best) = &pre.best {
        println!("pretraining: best validation ROUGE {:.3} at step {}", best.mean_rouge, best.step);
    }
    let before = evaluate(&pre.policy, &corpus.valid, &cfg, "nll").unwrap();

    let ft = finetune_rl(&cfg, &corpus, &pre.policy).unwrap();
    let after = evaluate(&ft.policy, &corpus.valid, &cfg, "relax").unwrap();

    let std: Vec<f64> = ft.logs.iter().map(|l| l.cov_std.unwrap_or(0.0)).collect();
    let ma = moving_average(&std, 50);
    for step in [49, 249, 499, 999].into_iter().filter(|&s| s < ma.len()) {
        let log_tau = ft.logs[step].log_tau.unwrap_or(f64::NAN);
        println!("step {:>4}: coverage std (moving average) {:.3}  log tau {:.3}", step + 1, ma[step], log_tau);
    }
    println!("{:<8} {:>8} {:>8} {:>8} {:>8}", "system", "R-1", "R-2", "R-L", "EFC");
    for (name, r) in [("nll", &before), ("relax", &after)] {
        println!("{name:<8} {:>8.3} {:>8.3} {:>8.3} {:>8.3}", r.rouge1, r.rouge2, r.rouge_l, r.mean_document_efc);
    }
    println!("EFC by document position (nll / relax):");
    for (i, (a, b)) in before.position_efc.iter().zip(&after.position_efc).enumerate() {
        println!("  doc {:>2}: {a:.3} / {b:.3}  ({} records)", i + 1, before.position_counts[i]);
    }
}
