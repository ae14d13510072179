//! CNN discriminator: probability that a token sequence is fluent English.
//!
//! Input sequences are distributions over the vocabulary; hard token ids are
//! converted to one-hot rows so real and generated inputs share one code
//! path through `embedding_lookup`. The embedded sequence runs through
//! parallel 1D convolution banks (widths 3/4/5, 64 filters each),
//! max-pooling over time, and two dense layers ending in a sigmoid.

use crate::rng::Rng;
use crate::tensor::{one_hot_rows, Graph, NodeId, Tensor, TensorError};
use crate::text::TokenSequence;

type Result<T> = std::result::Result<T, TensorError>;

pub const CONV_WIDTHS: [usize; 3] = [3, 4, 5];
pub const FILTERS_PER_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscriminatorDims {
    pub vocab: usize,
    pub embed: usize,
    pub dense: usize,
    pub max_len: usize,
}

impl Default for DiscriminatorDims {
    fn default() -> Self {
        DiscriminatorDims {
            vocab: 2000,
            embed: 64,
            dense: 128,
            max_len: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorParams {
    pub dims: DiscriminatorDims,
    pub embed: Tensor, // [V, E], separate from the generator's table
    pub conv_kernels: Vec<Tensor>, // [k, E, F] per width
    pub conv_biases: Vec<Tensor>,  // [F] per width
    pub dense_w: Tensor, // [3F, dense]
    pub dense_b: Tensor, // [dense]
    pub out_w: Tensor,   // [dense, 1]
    pub out_b: Tensor,   // [1]
}

fn xavier(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f32).sqrt();
    Tensor::param_uniform(shape, bound, rng)
}

impl DiscriminatorParams {
    pub fn new(dims: DiscriminatorDims, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let (v, e, f) = (dims.vocab, dims.embed, FILTERS_PER_WIDTH);
        let embed = Tensor::param_uniform(vec![v, e], 0.08, &mut rng);
        let mut conv_kernels = Vec::new();
        let mut conv_biases = Vec::new();
        for &k in &CONV_WIDTHS {
            conv_kernels.push(xavier(vec![k, e, f], k * e, f, &mut rng));
            let mut b = Tensor::zeros(vec![f]);
            b.requires_grad = true;
            conv_biases.push(b);
        }
        let total = CONV_WIDTHS.len() * f;
        let dense_w = xavier(vec![total, dims.dense], total, dims.dense, &mut rng);
        let mut dense_b = Tensor::zeros(vec![dims.dense]);
        dense_b.requires_grad = true;
        let out_w = xavier(vec![dims.dense, 1], dims.dense, 1, &mut rng);
        let mut out_b = Tensor::zeros(vec![1]);
        out_b.requires_grad = true;
        DiscriminatorParams {
            dims,
            embed,
            conv_kernels,
            conv_biases,
            dense_w,
            dense_b,
            out_w,
            out_b,
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![("embed".into(), &self.embed)];
        for (i, &k) in CONV_WIDTHS.iter().enumerate() {
            out.push((format!("conv{k}.kernel"), &self.conv_kernels[i]));
            out.push((format!("conv{k}.bias"), &self.conv_biases[i]));
        }
        out.push(("dense.w".into(), &self.dense_w));
        out.push(("dense.b".into(), &self.dense_b));
        out.push(("out.w".into(), &self.out_w));
        out.push(("out.b".into(), &self.out_b));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![("embed".into(), &mut self.embed)];
        for ((&k, kernel), bias) in CONV_WIDTHS
            .iter()
            .zip(self.conv_kernels.iter_mut())
            .zip(self.conv_biases.iter_mut())
        {
            out.push((format!("conv{k}.kernel"), kernel));
            out.push((format!("conv{k}.bias"), bias));
        }
        out.push(("dense.w".into(), &mut self.dense_w));
        out.push(("dense.b".into(), &mut self.dense_b));
        out.push(("out.w".into(), &mut self.out_w));
        out.push(("out.b".into(), &mut self.out_b));
        out
    }

    pub fn bind(&self, g: &mut Graph, frozen: bool) -> DiscriminatorBound {
        let mut leaf = |t: &Tensor| {
            if frozen {
                let mut c = t.clone();
                c.requires_grad = false;
                g.leaf(&c)
            } else {
                g.leaf(t)
            }
        };
        DiscriminatorBound {
            embed: leaf(&self.embed),
            conv_kernels: self.conv_kernels.iter().map(&mut leaf).collect(),
            conv_biases: self.conv_biases.iter().map(&mut leaf).collect(),
            dense_w: leaf(&self.dense_w),
            dense_b: leaf(&self.dense_b),
            out_w: leaf(&self.out_w),
            out_b: leaf(&self.out_b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorBound {
    pub embed: NodeId,
    pub conv_kernels: Vec<NodeId>,
    pub conv_biases: Vec<NodeId>,
    pub dense_w: NodeId,
    pub dense_b: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

impl DiscriminatorBound {
    /// Same order as `named_params`.
    pub fn ordered(&self) -> Vec<NodeId> {
        let mut out = vec![self.embed];
        for (k, b) in self.conv_kernels.iter().zip(&self.conv_biases) {
            out.push(*k);
            out.push(*b);
        }
        out.extend([self.dense_w, self.dense_b, self.out_w, self.out_b]);
        out
    }
}

impl DiscriminatorParams {
    /// Score a batch of vocabulary distributions [B, L, V] -> probabilities [B].
    /// Real sequences enter as exact one-hot rows; generated sequences as
    /// Gumbel-softmax outputs. Both share this path.
    pub fn score_dist_batch(
        &self,
        g: &mut Graph,
        bound: &DiscriminatorBound,
        dist: NodeId,
    ) -> Result<NodeId> {
        let shape = g.shape(dist).to_vec();
        if shape.len() != 3 || shape[2] != self.dims.vocab {
            return Err(TensorError::InvalidShape {
                op: "discriminator::score",
                shape,
                reason: format!("expects [batch, len, vocab={}]", self.dims.vocab),
            });
        }
        let (b, l, v) = (shape[0], shape[1], shape[2]);
        let e = self.dims.embed;
        let flat = g.reshape(dist, vec![b * l, v])?;
        let embedded = g.matmul(flat, bound.embed)?; // distribution-weighted rows
        let embedded = g.reshape(embedded, vec![b, l, e])?;

        let mut pooled = Vec::with_capacity(CONV_WIDTHS.len());
        for (i, _) in CONV_WIDTHS.iter().enumerate() {
            let conv = g.conv1d(embedded, bound.conv_kernels[i], bound.conv_biases[i])?;
            let act = g.relu(conv);
            pooled.push(g.max_pool_over_time(act)?); // [B, F]
        }
        let features = g.concat(&pooled, 1)?; // [B, 3F]
        let hidden = {
            let lin = g.matmul(features, bound.dense_w)?;
            let lin = g.add(lin, bound.dense_b)?;
            g.relu(lin)
        };
        let logit = {
            let lin = g.matmul(hidden, bound.out_w)?;
            g.add(lin, bound.out_b)? // [B, 1]
        };
        let prob = g.sigmoid(logit);
        g.reshape(prob, vec![b])
    }

    /// Hard token sequences are converted to one-hot rows first.
    pub fn score_tokens_batch(
        &self,
        g: &mut Graph,
        bound: &DiscriminatorBound,
        seqs: &[TokenSequence],
    ) -> Result<NodeId> {
        let (b, l) = (seqs.len(), self.dims.max_len);
        let ids: Vec<u32> = seqs.iter().flat_map(|s| s.ids.iter().copied()).collect();
        let one_hot = g.constant(one_hot_rows(&ids, self.dims.vocab));
        let dist = g.reshape(one_hot, vec![b, l, self.dims.vocab])?;
        self.score_dist_batch(g, bound, dist)
    }

    /// Probability in (0,1) for one hard token sequence.
    pub fn score_tokens(&self, seq: &TokenSequence) -> f32 {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, true);
        let s = self
            .score_tokens_batch(&mut g, &bound, std::slice::from_ref(seq))
            .expect("model-bound input");
        g.data(s)[0]
    }

    /// Probability in (0,1) for one soft sequence [L, V].
    pub fn score_soft(&self, soft: &Tensor) -> Result<f32> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, true);
        let c = g.constant(soft.clone());
        let dist = g.reshape(c, vec![1, soft.shape()[0], soft.shape()[1]])?;
        let s = self.score_dist_batch(&mut g, &bound, dist)?;
        Ok(g.data(s)[0])
    }

    /// Threshold accuracy over a balanced batch: fluent sequences labeled 1,
    /// generated soft sequences labeled 0.
    pub fn accuracy(
        &self,
        fluent: &[TokenSequence],
        generated: &Tensor, // [B, L, V]
        threshold: f32,
    ) -> Result<f32> {
        if fluent.is_empty() || generated.shape()[0] == 0 {
            return Err(TensorError::Contract {
                op: "discriminator::accuracy",
                reason: "empty batch".into(),
            });
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g, true);
        let real = self.score_tokens_batch(&mut g, &bound, fluent)?;
        let fake = {
            let c = g.constant(generated.clone());
            self.score_dist_batch(&mut g, &bound, c)?
        };
        Ok(accuracy_from_scores(
            g.data(real),
            g.data(fake),
            threshold,
        ))
    }
}

/// Fluent scores count as correct above the threshold, generated at or below.
pub fn accuracy_from_scores(real: &[f32], fake: &[f32], threshold: f32) -> f32 {
    let correct = real.iter().filter(|&&s| s > threshold).count()
        + fake.iter().filter(|&&s| s <= threshold).count();
    correct as f32 / (real.len() + fake.len()) as f32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{encode, tokenize, Vocabulary};

    fn tiny() -> (DiscriminatorParams, Vocabulary) {
        let corpus: Vec<Vec<String>> = ["the cat sees the dog .", "a bird likes the river ."]
            .iter()
            .map(|s| tokenize(s))
            .collect();
        let vocab = Vocabulary::build(&corpus, 32).unwrap();
        let dims = DiscriminatorDims {
            vocab: vocab.size(),
            embed: 8,
            dense: 16,
            max_len: 10,
        };
        (DiscriminatorParams::new(dims, 3), vocab)
    }

    #[test]
    fn scores_live_strictly_inside_unit_interval() {
        let (params, vocab) = tiny();
        for text in ["the cat sees the dog .", "a bird likes the river .", ". ."] {
            let seq = encode(&tokenize(text), &vocab, 10);
            let s = params.score_tokens(&seq);
            assert!(s > 0.0 && s < 1.0, "score {s} outside (0,1)");
        }
    }

    #[test]
    fn one_hot_soft_input_scores_identically_to_hard_ids() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("the cat sees the dog ."), &vocab, 10);
        let hard = params.score_tokens(&seq);
        let soft_rows = one_hot_rows(&seq.ids, params.dims.vocab);
        let soft = params.score_soft(&soft_rows).unwrap();
        assert!((hard - soft).abs() < 1e-6, "{hard} vs {soft}");
    }

    #[test]
    fn scoring_is_deterministic() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("a bird likes the river ."), &vocab, 10);
        assert_eq!(params.score_tokens(&seq), params.score_tokens(&seq));
    }

    #[test]
    fn accuracy_matches_hand_count() {
        // 4 examples, scores straddling the threshold:
        // real: 0.9 (hit), 0.2 (miss); fake: 0.3 (hit), 0.8 (miss) -> 0.5.
        assert_eq!(accuracy_from_scores(&[0.9, 0.2], &[0.3, 0.8], 0.5), 0.5);
        // Perfect discriminator case.
        assert_eq!(accuracy_from_scores(&[0.99, 0.98], &[0.01, 0.02], 0.5), 1.0);
    }

    #[test]
    fn accuracy_rejects_empty_batches() {
        let (params, _) = tiny();
        let soft = Tensor::zeros(vec![0, 10, params.dims.vocab]);
        assert!(params.accuracy(&[], &soft, 0.5).is_err());
    }

    #[test]
    fn gradient_reaches_soft_input() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("the cat sees ."), &vocab, 10);
        let mut soft = one_hot_rows(&seq.ids, params.dims.vocab);
        // Smooth the one-hots a little so the input is an interior point.
        for v in soft.data_mut().iter_mut() {
            *v = 0.9 * *v + 0.1 / params.dims.vocab as f32;
        }
        soft.requires_grad = true;
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let leaf = g.leaf(&soft);
        let dist = g
            .reshape(leaf, vec![1, 10, params.dims.vocab])
            .unwrap();
        let score = params.score_dist_batch(&mut g, &bound, dist).unwrap();
        let loss = g.sum(score, None).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad_of(leaf).expect("soft input gradient");
        assert!(grad.iter().any(|&v| v != 0.0));
    }
}
