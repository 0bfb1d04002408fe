//! Coverage reward of a prediction against a reference over several documents.

use covrelax::coverage_reward::{combined_reward, coverage_vector, cv_inverse, DocumentSet, RewardConfig};
use covrelax::text_metrics::{tokenize, Origin, TokenSeq};
use covrelax::vocab::{Vocab, END_SEP};

fn main() {
    let documents = [
        "city council vote delayed after storm hits coast",
        "storm hits coast ; river bank flood expected",
        "river bank flood closes school ; storm hits coast",
    ];
    let reference = "storm hits coast and river bank flood";
    let candidates = ["storm hits coast", "city council vote delayed", "storm hits coast ; river bank flood"];

    let vocab = Vocab::build(documents.iter().copied().chain([reference]).chain(candidates), usize::MAX);
    let docs: Vec<TokenSeq> = documents.iter().map(|d| tokenize(d, &vocab, Origin::Document)).collect();
    let docs = DocumentSet::new(docs, Some(END_SEP)).unwrap();
    let reference = tokenize(reference, &vocab, Origin::Reference);
    let cfg = RewardConfig::default();

    let cov = coverage_vector(&reference, &docs);
    println!("reference coverage {:?}, mu/sigma = {:.3}", cov.values, cv_inverse(&cov.values, &cfg));
    for text in candidates {
        let pred = tokenize(text, &vocab, Origin::Prediction);
        let cov = coverage_vector(&pred, &docs);
        let r = combined_reward(&pred, &reference, &docs, &cfg).unwrap();
        println!("\"{text}\"");
        println!(
            "  coverage {:?}  rouge-l {:.3}  r_cov {:.3}  r_hat {:.3}  reward {:.3}",
            cov.values.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            r.rouge_l_f1,
            r.r_cov,
            r.r_cov_hat,
            r.combined
        );
    }
}
