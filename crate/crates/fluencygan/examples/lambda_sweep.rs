//! The lambda trade-off: a tiny sweep showing the copy regime at low lambda
//! and the scrambled regime when the adversarial term dominates.
//!
//! Run with: cargo run --release --example lambda_sweep

use fluencygan::discriminator::{DiscriminatorDims, DiscriminatorParams};
use fluencygan::lstm::LstmDims;
use fluencygan::text::corrupt::{corrupt, default_rules};
use fluencygan::text::{encode, synth, tokenize, Vocabulary};
use fluencygan::train::{copy_stats, PairedCorpus, Trainer, TrainingConfig};
use fluencygan::GeneratorModel;

fn main() {
    let max_len = 16;
    let lines = synth::fluent_corpus(120, 23);
    let tokens: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
    let vocab = Vocabulary::build(&tokens, 512).unwrap();
    let fluent: Vec<_> = tokens.iter().map(|t| encode(t, &vocab, max_len)).collect();
    let awkward: Vec<_> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| encode(&corrupt(t, &default_rules(), i as u64), &vocab, max_len))
        .collect();
    let corpus = PairedCorpus::new(awkward, fluent).unwrap();

    println!("lambda   exact-copy rate   token overlap");
    for lambda in [0.01f32, 0.5, 10.0] {
        let generator = GeneratorModel::new_lstm(
            LstmDims {
                vocab: vocab.size(),
                embed: 24,
                hidden: 48,
                max_len,
            },
            3,
        );
        let discriminator = DiscriminatorParams::new(
            DiscriminatorDims {
                vocab: vocab.size(),
                embed: 24,
                dense: 48,
                max_len,
            },
            4,
        );
        let config = TrainingConfig {
            lambda,
            batch_size: 16,
            ..Default::default()
        };
        let mut trainer =
            Trainer::new(generator, discriminator, vocab.clone(), config).unwrap();
        trainer.pretrain(&corpus, 10).unwrap();
        trainer.adversarial_train(&corpus, 3).unwrap();
        let (copies, overlap) = copy_stats(&trainer.generator, &corpus.awkward);
        println!("{lambda:<8} {copies:<17.3} {overlap:.3}");
    }
    println!("\nlow lambda copies the input; large lambda trades fidelity away");
}
