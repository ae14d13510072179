//! Autoencoder pretraining on a small synthetic corpus: the generator learns
//! to reproduce its input sentence before any adversarial pressure.
//!
//! Pass `transformer` to use the transformer generator instead of the LSTM.
//!
//! Run with: cargo run --release --example pretrain_autoencoder [transformer]

use fluencygan::discriminator::{DiscriminatorDims, DiscriminatorParams};
use fluencygan::lstm::LstmDims;
use fluencygan::text::corrupt::{corrupt, default_rules};
use fluencygan::text::{decode, encode, synth, tokenize, Vocabulary};
use fluencygan::train::{PairedCorpus, Trainer, TrainingConfig};
use fluencygan::transformer::TransformerDims;
use fluencygan::GeneratorModel;

fn main() {
    let max_len = 20;
    let lines = synth::fluent_corpus(200, 5);
    let tokens: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
    let vocab = Vocabulary::build(&tokens, 512).unwrap();
    let fluent: Vec<_> = tokens.iter().map(|t| encode(t, &vocab, max_len)).collect();
    let awkward: Vec<_> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| encode(&corrupt(t, &default_rules(), i as u64), &vocab, max_len))
        .collect();
    let corpus = PairedCorpus::new(awkward, fluent).unwrap();

    let use_transformer = std::env::args().nth(1).as_deref() == Some("transformer");
    let generator = if use_transformer {
        GeneratorModel::new_transformer(
            TransformerDims {
                vocab: vocab.size(),
                model: 32,
                heads: 4,
                ff: 64,
                enc_layers: 2,
                dec_layers: 2,
                max_len,
                dropout: 0.1,
            },
            7,
        )
    } else {
        GeneratorModel::new_lstm(
            LstmDims {
                vocab: vocab.size(),
                embed: 32,
                hidden: 64,
                max_len,
            },
            7,
        )
    };
    println!("pretraining the {} generator as an autoencoder", generator.kind().name());

    let discriminator = DiscriminatorParams::new(
        DiscriminatorDims {
            vocab: vocab.size(),
            embed: 32,
            dense: 64,
            max_len,
        },
        8,
    );
    let config = TrainingConfig {
        batch_size: 16,
        ..Default::default()
    };
    let mut trainer = Trainer::new(generator, discriminator, vocab.clone(), config).unwrap();

    for block in 0..4 {
        let logs = trainer.pretrain(&corpus, 3).unwrap();
        let acc = trainer.token_accuracy(&corpus).unwrap();
        println!(
            "epochs {:>2}: mean cross-entropy {:.4}, token reconstruction accuracy {:.3}",
            (block + 1) * 3,
            logs.last().unwrap().loss_ae.unwrap(),
            acc
        );
    }

    println!("\ngreedy reconstructions:");
    for seq in corpus.awkward.iter().take(4) {
        let out = trainer.generator.decode_greedy(seq);
        println!("  in : {}", decode(seq, &vocab));
        println!("  out: {}", decode(&out, &vocab));
    }
}
