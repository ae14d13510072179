//! Property tests over the text pipeline and the sampling head.

use proptest::prelude::*;

use fluencygan::text::{decode, encode, tokenize, Vocabulary};
use fluencygan::{Graph, Tensor};

fn word_vocab() -> (Vocabulary, Vec<String>) {
    let words: Vec<String> = [
        "the", "a", "cat", "dog", "river", "teacher", "student", "watches", "likes", "finds",
        "small", "old", "quiet", "morning", "market", "letter", "boat", "garden", "window",
        "friend", ".", ",", "?",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let vocab = Vocabulary::build(std::slice::from_ref(&words), 64).unwrap();
    (vocab, words)
}

proptest! {
    // decode(encode(t)) joins the original tokens back together for any
    // in-vocabulary sentence that fits under max_len.
    #[test]
    fn encode_decode_round_trip(indices in proptest::collection::vec(0usize..23, 1..14)) {
        let (vocab, words) = word_vocab();
        let sentence: Vec<String> = indices.iter().map(|&i| words[i].clone()).collect();
        let seq = encode(&sentence, &vocab, 16);
        prop_assert_eq!(decode(&seq, &vocab), sentence.join(" "));
    }

    // Tokenization never produces empty tokens and always lowercases.
    #[test]
    fn tokenize_is_lowercase_and_non_empty(text in "[A-Za-z ,.!?()0-9-]{0,60}") {
        for token in tokenize(&text) {
            prop_assert!(!token.is_empty());
            prop_assert_eq!(token.to_lowercase(), token);
        }
    }

    // Softmax and gumbel-softmax rows are probability distributions for any
    // finite logits and any positive temperature.
    #[test]
    fn sampling_rows_are_distributions(
        logits in proptest::collection::vec(-30.0f32..30.0, 8),
        noise_seed in 0u64..1000,
        tau in 0.05f32..4.0,
    ) {
        let mut rng = fluencygan::rng::Rng::new(noise_seed);
        let noise: Vec<f32> = (0..8).map(|_| rng.gumbel()).collect();
        let mut g = Graph::new();
        let l = g.constant(Tensor::new(vec![2, 4], logits).unwrap());
        let n = g.constant(Tensor::new(vec![2, 4], noise).unwrap());
        let soft = g.gumbel_softmax(l, tau, n).unwrap();
        let sm = g.softmax(l, 1).unwrap();
        for id in [soft, sm] {
            for row in g.data(id).chunks(4) {
                let sum: f32 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-5, "row sums to {}", sum);
                prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }
}
