//! ROUGE and extractive fragment coverage on a pair of sentences.

use covrelax::text_metrics::{efc, extract_fragments, rouge, tokenize, Origin, RougeVariant};
use covrelax::vocab::Vocab;

fn main() {
    let document = "The storm hit the coast on Monday, flooding the river bank.";
    let reference = "A storm hit the coast and flooded the river bank.";
    let prediction = "The storm hit the coast, flooding the river bank.";
    let vocab = Vocab::build([document, reference, prediction], usize::MAX);

    let doc = tokenize(document, &vocab, Origin::Document);
    let reference = tokenize(reference, &vocab, Origin::Reference);
    let pred = tokenize(prediction, &vocab, Origin::Prediction);

    for variant in [RougeVariant::R1, RougeVariant::R2, RougeVariant::RL] {
        let s = rouge(&pred, &reference, variant);
        println!("{variant:?}: p {:.3} r {:.3} f1 {:.3}", s.precision, s.recall, s.f1);
    }

    println!("fragments of the prediction found in the document:");
    for f in extract_fragments(&pred, &doc) {
        let words = vocab.decode(&pred[f.start_in_summary..f.start_in_summary + f.length]);
        println!("  [{}..{}) \"{words}\"", f.start_in_summary, f.start_in_summary + f.length);
    }
    println!("EFC = {:.3}", efc(&pred, &doc).score);
}
