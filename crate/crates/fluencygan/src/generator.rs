//! Architecture-agnostic front over the two generators.
//!
//! Training, evaluation, and the CLI all work through [`GeneratorModel`] so
//! the LSTM and transformer paths stay interchangeable: same teacher-forcing
//! convention, same Gumbel-softmax head, same greedy decoding contract.

use crate::lstm::{LstmDims, LstmGeneratorParams};
use crate::rng::Rng;
use crate::tensor::{Graph, NodeId, Tensor, TensorError};
use crate::text::TokenSequence;
use crate::transformer::{TransformerDims, TransformerParams};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Lstm,
    Transformer,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Lstm => "lstm",
            GeneratorKind::Transformer => "transformer",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lstm" => Some(GeneratorKind::Lstm),
            "transformer" => Some(GeneratorKind::Transformer),
            _ => None,
        }
    }
}

/// Parameter set plus architecture tag.
#[derive(Debug, Clone)]
pub enum GeneratorModel {
    Lstm(LstmGeneratorParams),
    Transformer(TransformerParams),
}

/// Products of one teacher-forced forward pass.
pub struct GeneratorForward {
    /// Per-position vocabulary logits, [B, L, V].
    pub logits: NodeId,
    /// Gumbel-softmax samples, [B, L, V]; present when a temperature was given.
    pub soft: Option<NodeId>,
    /// Bound parameter leaves in `named_params` order.
    pub bound: Vec<NodeId>,
}

impl GeneratorModel {
    pub fn new_lstm(dims: LstmDims, seed: u64) -> Self {
        GeneratorModel::Lstm(LstmGeneratorParams::new(dims, seed))
    }

    pub fn new_transformer(dims: TransformerDims, seed: u64) -> Self {
        GeneratorModel::Transformer(TransformerParams::new(dims, seed))
    }

    pub fn kind(&self) -> GeneratorKind {
        match self {
            GeneratorModel::Lstm(_) => GeneratorKind::Lstm,
            GeneratorModel::Transformer(_) => GeneratorKind::Transformer,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            GeneratorModel::Lstm(p) => p.dims.vocab,
            GeneratorModel::Transformer(p) => p.dims.vocab,
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            GeneratorModel::Lstm(p) => p.dims.max_len,
            GeneratorModel::Transformer(p) => p.dims.max_len,
        }
    }

    /// Encoder state width: H for the LSTM, D for the transformer.
    pub fn hidden_size(&self) -> usize {
        match self {
            GeneratorModel::Lstm(p) => p.dims.hidden,
            GeneratorModel::Transformer(p) => p.dims.model,
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        match self {
            GeneratorModel::Lstm(p) => p.named_params(),
            GeneratorModel::Transformer(p) => p.named_params(),
        }
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            GeneratorModel::Lstm(p) => p.named_params_mut(),
            GeneratorModel::Transformer(p) => p.named_params_mut(),
        }
    }

    /// Teacher-forced forward over a batch. `tau: Some(t)` adds the
    /// Gumbel-softmax head with seeded noise; `frozen` detaches parameters
    /// (no gradients); `dropout_rng` enables the transformer's dropout.
    pub fn forward_teacher(
        &self,
        g: &mut Graph,
        src: &[TokenSequence],
        tgt: &[TokenSequence],
        tau: Option<f32>,
        noise_seed: u64,
        frozen: bool,
        dropout_rng: Option<&mut Rng>,
    ) -> Result<GeneratorForward> {
        match self {
            GeneratorModel::Lstm(p) => {
                let bound = p.bind(g, frozen);
                let enc = p.encode_batch(g, &bound, src)?;
                let logits = p.decode_teacher_logits(g, &bound, &enc, tgt)?;
                let soft = match tau {
                    Some(t) => {
                        let (b, l, v) = (src.len(), p.dims.max_len, p.dims.vocab);
                        if !(t > 0.0) {
                            return Err(TensorError::InvalidParameter {
                                op: "forward_teacher",
                                reason: format!("temperature must be positive, got {t}"),
                            });
                        }
                        let mut rng = Rng::new(noise_seed);
                        let noise: Vec<f32> = (0..b * l * v).map(|_| rng.gumbel()).collect();
                        let noise = g.constant(Tensor::new(vec![b, l, v], noise)?);
                        Some(g.gumbel_softmax(logits, t, noise)?)
                    }
                    None => None,
                };
                Ok(GeneratorForward {
                    logits,
                    soft,
                    bound: bound.ordered(),
                })
            }
            GeneratorModel::Transformer(p) => {
                let bound = p.bind(g, frozen);
                let fwd = p.forward(g, &bound, src, tgt, dropout_rng)?;
                let soft = match tau {
                    Some(t) => {
                        let (b, l, v) = (src.len(), p.dims.max_len, p.dims.vocab);
                        if !(t > 0.0) {
                            return Err(TensorError::InvalidParameter {
                                op: "forward_teacher",
                                reason: format!("temperature must be positive, got {t}"),
                            });
                        }
                        let mut rng = Rng::new(noise_seed);
                        let noise: Vec<f32> = (0..b * l * v).map(|_| rng.gumbel()).collect();
                        let noise = g.constant(Tensor::new(vec![b, l, v], noise)?);
                        Some(g.gumbel_softmax(fwd.logits, t, noise)?)
                    }
                    None => None,
                };
                Ok(GeneratorForward {
                    logits: fwd.logits,
                    soft,
                    bound: bound.params,
                })
            }
        }
    }

    pub fn decode_greedy_batch(&self, src: &[TokenSequence]) -> Vec<TokenSequence> {
        match self {
            GeneratorModel::Lstm(p) => p.decode_greedy_batch(src),
            GeneratorModel::Transformer(p) => p.decode_greedy_batch(src),
        }
    }

    pub fn decode_greedy(&self, src: &TokenSequence) -> TokenSequence {
        match self {
            GeneratorModel::Lstm(p) => p.decode_greedy(src),
            GeneratorModel::Transformer(p) => p.decode_greedy(src),
        }
    }

    /// Per-position encoder outputs for one sentence, [max_len, hidden].
    pub fn encoder_outputs(&self, src: &TokenSequence) -> Tensor {
        match self {
            GeneratorModel::Lstm(p) => p.encoder_outputs(src),
            GeneratorModel::Transformer(p) => p.encoder_outputs(src),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{encode, tokenize, Vocabulary};

    #[test]
    fn both_kinds_share_the_forward_contract() {
        let corpus: Vec<Vec<String>> = ["the cat sees the dog .", "a bird likes the river ."]
            .iter()
            .map(|s| tokenize(s))
            .collect();
        let vocab = Vocabulary::build(&corpus, 32).unwrap();
        let seqs: Vec<TokenSequence> = corpus.iter().map(|s| encode(s, &vocab, 10)).collect();
        let models = [
            GeneratorModel::new_lstm(
                LstmDims {
                    vocab: vocab.size(),
                    embed: 8,
                    hidden: 12,
                    max_len: 10,
                },
                5,
            ),
            GeneratorModel::new_transformer(
                TransformerDims {
                    vocab: vocab.size(),
                    model: 16,
                    heads: 2,
                    ff: 32,
                    enc_layers: 1,
                    dec_layers: 1,
                    max_len: 10,
                    dropout: 0.0,
                },
                5,
            ),
        ];
        for model in models {
            let mut g = Graph::new();
            let fwd = model
                .forward_teacher(&mut g, &seqs, &seqs, Some(1.0), 3, false, None)
                .unwrap();
            assert_eq!(g.shape(fwd.logits), &[2, 10, vocab.size()]);
            let soft = fwd.soft.unwrap();
            for row in g.data(soft).chunks(vocab.size()) {
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            }
            assert_eq!(fwd.bound.len(), model.named_params().len());
            let out = model.decode_greedy(&seqs[0]);
            assert_eq!(out.ids[0], crate::text::BOS);
            assert_eq!(out.len(), 10);
        }
    }
}
