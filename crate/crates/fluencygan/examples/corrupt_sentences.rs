//! Tokenization and the corruption rules that manufacture awkward English
//! from fluent sentences.
//!
//! Run with: cargo run --release --example corrupt_sentences

use fluencygan::text::corrupt::{corrupt, CorruptionKind, CorruptionRule};
use fluencygan::text::{synth, tokenize};

fn main() {
    let rules = vec![
        CorruptionRule::new(CorruptionKind::DuplicateToken, 0.15).unwrap(),
        CorruptionRule::new(CorruptionKind::DropToken, 0.10).unwrap(),
        CorruptionRule::new(CorruptionKind::SwapAdjacent, 0.15).unwrap(),
        CorruptionRule::new(CorruptionKind::SubstituteFunctionWord, 0.5).unwrap(),
    ];
    let (left, right) = ("fluent", "awkward");
    println!("{left:<52} {right}");
    let rule = "-".repeat(52);
    println!("{rule} {rule}");
    for (i, line) in synth::fluent_corpus(8, 2024).iter().enumerate() {
        let tokens = tokenize(line);
        let bad = corrupt(&tokens, &rules, i as u64);
        println!("{:<52} {}", line, bad.join(" "));
    }
    println!();
    println!("same seed, same corruption:");
    let tokens = tokenize("The students read books in the library.");
    println!("  in : {}", tokens.join(" "));
    for _ in 0..2 {
        println!("  out: {}", corrupt(&tokens, &rules, 42).join(" "));
    }
}
