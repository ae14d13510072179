//! The full GAN loop at toy scale: pretrain, then alternate one
//! discriminator epoch with two generator epochs per round, watching the
//! discriminator's accuracy respond to adversarial pressure.
//!
//! Run with: cargo run --release --example adversarial_training

use fluencygan::discriminator::{DiscriminatorDims, DiscriminatorParams};
use fluencygan::lstm::LstmDims;
use fluencygan::text::corrupt::{corrupt, default_rules};
use fluencygan::text::{encode, synth, tokenize, Vocabulary};
use fluencygan::train::{copy_stats, PairedCorpus, Trainer, TrainingConfig};
use fluencygan::GeneratorModel;

fn main() {
    let max_len = 20;
    let lines = synth::fluent_corpus(200, 17);
    let tokens: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
    let vocab = Vocabulary::build(&tokens, 512).unwrap();
    let fluent: Vec<_> = tokens.iter().map(|t| encode(t, &vocab, max_len)).collect();
    let awkward: Vec<_> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| encode(&corrupt(t, &default_rules(), i as u64), &vocab, max_len))
        .collect();
    let corpus = PairedCorpus::new(awkward, fluent).unwrap();

    let generator = GeneratorModel::new_lstm(
        LstmDims {
            vocab: vocab.size(),
            embed: 32,
            hidden: 64,
            max_len,
        },
        3,
    );
    let discriminator = DiscriminatorParams::new(
        DiscriminatorDims {
            vocab: vocab.size(),
            embed: 32,
            dense: 64,
            max_len,
        },
        4,
    );
    let config = TrainingConfig {
        lambda: 0.1,
        batch_size: 16,
        pretrain_epochs: 8,
        tau_anneal_floor: Some(0.5),
        ..Default::default()
    };
    let mut trainer = Trainer::new(generator, discriminator, vocab, config).unwrap();

    println!("pretraining 8 epochs...");
    trainer.pretrain(&corpus, 8).unwrap();
    println!(
        "reconstruction accuracy after pretraining: {:.3}\n",
        trainer.token_accuracy(&corpus).unwrap()
    );

    println!("round  phase  L_AE     L_DG     L_DF     disc_acc");
    let logs = trainer.adversarial_train(&corpus, 5).unwrap();
    for log in &logs {
        let fmt = |v: Option<f64>| v.map_or("   -    ".to_string(), |x| format!("{x:+.4}"));
        println!(
            "{:>5}  {:<5}  {}  {}  {}  {}",
            log.round,
            log.phase,
            fmt(log.loss_ae),
            fmt(log.loss_dg),
            fmt(log.loss_df),
            log.disc_acc.map_or("-".into(), |a| format!("{a:.3}")),
        );
    }

    let (copies, overlap) = copy_stats(&trainer.generator, &corpus.awkward);
    println!("\nexact-copy rate {copies:.3}, mean token overlap {overlap:.3}");
    println!("(low lambda keeps the generator close to its input)");
}
