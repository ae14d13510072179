//! The evaluation metrics by themselves: both BLEU variants and the
//! embedding-cosine similarity, plus a full corpus report.
//!
//! Run with: cargo run --release --example evaluate_metrics

use fluencygan::eval::{bleu_bow, bleu_ngram, cosine, evaluate_corpus, sentence_embedding};
use fluencygan::lstm::LstmDims;
use fluencygan::text::{encode, synth, tokenize, Vocabulary};
use fluencygan::train::TrainingConfig;
use fluencygan::GeneratorModel;

fn main() {
    let cases = [
        ("the cat sat on the mat .", "the cat sat on the mat ."),
        ("the cat sat on mat .", "the cat sat on the mat ."),
        ("mat the on sat cat the .", "the cat sat on the mat ."),
        ("a dog runs fast .", "the cat sat on the mat ."),
    ];
    println!("{:<28} {:<28} bleu_bow  bleu_ngram", "candidate", "reference");
    for (cand, reference) in cases {
        let c = tokenize(cand);
        let r = tokenize(reference);
        println!(
            "{:<28} {:<28} {:<9.4} {:.4}",
            cand,
            reference,
            bleu_bow(&c, &r),
            bleu_ngram(&c, &r, 4)
        );
    }
    println!("\nbag-of-words precision ignores order; n-gram BLEU does not");

    // Embedding cosine via a (briefly trained) encoder.
    let max_len = 16;
    let lines = synth::fluent_corpus(60, 9);
    let tokens: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
    let vocab = Vocabulary::build(&tokens, 256).unwrap();
    let model = GeneratorModel::new_lstm(
        LstmDims {
            vocab: vocab.size(),
            embed: 24,
            hidden: 48,
            max_len,
        },
        5,
    );
    let a = encode(&tokenize(&lines[0]), &vocab, max_len);
    let b = encode(&tokenize(&lines[1]), &vocab, max_len);
    let ea = sentence_embedding(&a, &model);
    let eb = sentence_embedding(&b, &model);
    println!("\ncosine(s, s)      = {:.4}", cosine(&ea, &ea));
    println!("cosine(s, other)  = {:.4}", cosine(&ea, &eb));

    let pairs: Vec<(String, String)> = lines
        .iter()
        .take(8)
        .map(|l| (l.clone(), l.clone()))
        .collect();
    let report = evaluate_corpus(&model, &vocab, &pairs, &TrainingConfig::default()).unwrap();
    println!(
        "\ncorpus report over {} identity pairs: bleu_bow {:.3}, bleu_ngram {:.3}, cosine {:.3}",
        report.sentences.len(),
        report.means.bleu_bow,
        report.means.bleu_ngram,
        report.means.cosine
    );
}
