//! Attention LSTM encoder-decoder generator.
//!
//! The encoder consumes the source ids token by token; its per-step hidden
//! states feed an additive attention over which the decoder forms a context
//! vector each step. During training the decoder is teacher-forced and its
//! logits pass through a Gumbel-softmax head so sampled tokens stay
//! differentiable; at inference it decodes greedily.
//!
//! Convention for teacher forcing and greedy decoding alike: the decoder
//! input at step i is the output token at i-1, with BOS fed at step 0, and
//! position 0 of every produced sequence is BOS itself. Real and generated
//! sequences therefore share the same [BOS, content.., EOS, PAD..] frame.

use crate::rng::Rng;
use crate::tensor::{Graph, NodeId, Tensor, TensorError};
use crate::text::{TokenSequence, BOS, EOS, PAD};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub max_len: usize,
}

impl Default for LstmDims {
    fn default() -> Self {
        LstmDims {
            vocab: 2000,
            embed: 64,
            hidden: 128,
            max_len: 32,
        }
    }
}

/// All trainable tensors of the generator, plus its fixed dimensions.
#[derive(Debug, Clone)]
pub struct LstmGeneratorParams {
    pub dims: LstmDims,
    pub embed: Tensor,    // [V, E]
    pub enc_w_ih: Tensor, // [E, 4H]
    pub enc_w_hh: Tensor, // [H, 4H]
    pub enc_b: Tensor,    // [4H]
    pub dec_w_ih: Tensor, // [E + H, 4H]: decoder input is [token embed ; context]
    pub dec_w_hh: Tensor, // [H, 4H]
    pub dec_b: Tensor,    // [4H]
    pub attn_w: Tensor,   // [2H, H]: dense over [encoder output ; decoder state]
    pub attn_b: Tensor,   // [H]
    pub attn_v: Tensor,   // [H, 1]: score vector after tanh
    pub out_w: Tensor,    // [H, V]
    pub out_b: Tensor,    // [V]
}

impl LstmGeneratorParams {
    /// Seeded uniform(-0.08, 0.08) initialization, except that the forget
    /// gate biases start at 1 so cell memory survives early training.
    pub fn new(dims: LstmDims, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let (v, e, h) = (dims.vocab, dims.embed, dims.hidden);
        let u = |shape: Vec<usize>, rng: &mut Rng| Tensor::param_uniform(shape, 0.08, rng);
        let gate_bias = |rng: &mut Rng| {
            let mut b = Tensor::param_uniform(vec![4 * h], 0.08, rng);
            for slot in &mut b.data_mut()[h..2 * h] {
                *slot += 1.0;
            }
            b
        };
        LstmGeneratorParams {
            dims,
            embed: u(vec![v, e], &mut rng),
            enc_w_ih: u(vec![e, 4 * h], &mut rng),
            enc_w_hh: u(vec![h, 4 * h], &mut rng),
            enc_b: gate_bias(&mut rng),
            dec_w_ih: u(vec![e + h, 4 * h], &mut rng),
            dec_w_hh: u(vec![h, 4 * h], &mut rng),
            dec_b: gate_bias(&mut rng),
            attn_w: u(vec![2 * h, h], &mut rng),
            attn_b: u(vec![h], &mut rng),
            attn_v: u(vec![h, 1], &mut rng),
            out_w: u(vec![h, v], &mut rng),
            out_b: u(vec![v], &mut rng),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("embed".into(), &self.embed),
            ("enc.w_ih".into(), &self.enc_w_ih),
            ("enc.w_hh".into(), &self.enc_w_hh),
            ("enc.b".into(), &self.enc_b),
            ("dec.w_ih".into(), &self.dec_w_ih),
            ("dec.w_hh".into(), &self.dec_w_hh),
            ("dec.b".into(), &self.dec_b),
            ("attn.w".into(), &self.attn_w),
            ("attn.b".into(), &self.attn_b),
            ("attn.v".into(), &self.attn_v),
            ("out.w".into(), &self.out_w),
            ("out.b".into(), &self.out_b),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("embed".into(), &mut self.embed),
            ("enc.w_ih".into(), &mut self.enc_w_ih),
            ("enc.w_hh".into(), &mut self.enc_w_hh),
            ("enc.b".into(), &mut self.enc_b),
            ("dec.w_ih".into(), &mut self.dec_w_ih),
            ("dec.w_hh".into(), &mut self.dec_w_hh),
            ("dec.b".into(), &mut self.dec_b),
            ("attn.w".into(), &mut self.attn_w),
            ("attn.b".into(), &mut self.attn_b),
            ("attn.v".into(), &mut self.attn_v),
            ("out.w".into(), &mut self.out_w),
            ("out.b".into(), &mut self.out_b),
        ]
    }

    /// Insert every parameter as a graph leaf. `frozen` inserts non-trainable
    /// copies (inference or discriminator-phase forward).
    pub fn bind(&self, g: &mut Graph, frozen: bool) -> LstmBound {
        let mut leaf = |t: &Tensor| {
            if frozen {
                let mut c = t.clone();
                c.requires_grad = false;
                g.leaf(&c)
            } else {
                g.leaf(t)
            }
        };
        LstmBound {
            embed: leaf(&self.embed),
            enc_w_ih: leaf(&self.enc_w_ih),
            enc_w_hh: leaf(&self.enc_w_hh),
            enc_b: leaf(&self.enc_b),
            dec_w_ih: leaf(&self.dec_w_ih),
            dec_w_hh: leaf(&self.dec_w_hh),
            dec_b: leaf(&self.dec_b),
            attn_w: leaf(&self.attn_w),
            attn_b: leaf(&self.attn_b),
            attn_v: leaf(&self.attn_v),
            out_w: leaf(&self.out_w),
            out_b: leaf(&self.out_b),
        }
    }
}

/// Graph leaves for one forward pass, in `named_params` order.
#[derive(Debug, Clone, Copy)]
pub struct LstmBound {
    pub embed: NodeId,
    pub enc_w_ih: NodeId,
    pub enc_w_hh: NodeId,
    pub enc_b: NodeId,
    pub dec_w_ih: NodeId,
    pub dec_w_hh: NodeId,
    pub dec_b: NodeId,
    pub attn_w: NodeId,
    pub attn_b: NodeId,
    pub attn_v: NodeId,
    pub out_w: NodeId,
    pub out_b: NodeId,
}

impl LstmBound {
    pub fn ordered(&self) -> Vec<NodeId> {
        vec![
            self.embed,
            self.enc_w_ih,
            self.enc_w_hh,
            self.enc_b,
            self.dec_w_ih,
            self.dec_w_hh,
            self.dec_b,
            self.attn_w,
            self.attn_b,
            self.attn_v,
            self.out_w,
            self.out_b,
        ]
    }
}

/// Encoder result: per-step outputs, EOS-position final state, and the
/// precomputed attention projection of the outputs.
pub struct LstmEncoding {
    pub outputs: NodeId,  // [B, L, H]
    pub final_h: NodeId,  // [B, H] gathered at each sentence's EOS position
    pub final_c: NodeId,  // [B, H]
    pub enc_proj: NodeId, // [B, L, H]: outputs * attn_w[..H] + attn_b
    pub attn_mask: NodeId, // [B, L] constant: 0 on non-PAD, -inf on PAD
    pub batch: usize,
    pub len: usize,
}

fn lstm_cell(
    g: &mut Graph,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    w_ih: NodeId,
    w_hh: NodeId,
    b: NodeId,
    hidden: usize,
) -> Result<(NodeId, NodeId)> {
    let xi = g.matmul(x, w_ih)?;
    let hh = g.matmul(h, w_hh)?;
    let pre = g.add(xi, hh)?;
    let gates = g.add(pre, b)?;
    let i_gate = {
        let n = g.narrow(gates, 1, 0, hidden)?;
        g.sigmoid(n)
    };
    let f_gate = {
        let n = g.narrow(gates, 1, hidden, hidden)?;
        g.sigmoid(n)
    };
    let g_gate = {
        let n = g.narrow(gates, 1, 2 * hidden, hidden)?;
        g.tanh(n)
    };
    let o_gate = {
        let n = g.narrow(gates, 1, 3 * hidden, hidden)?;
        g.sigmoid(n)
    };
    let fc = g.mul(f_gate, c)?;
    let ig = g.mul(i_gate, g_gate)?;
    let c_new = g.add(fc, ig)?;
    let tc = g.tanh(c_new);
    let h_new = g.mul(o_gate, tc)?;
    Ok((h_new, c_new))
}

/// Additive attention over encoder outputs for a batch of decoder states:
/// weights = softmax over unmasked positions of v . tanh(W [enc ; dec] + b).
fn attend_batch(
    g: &mut Graph,
    bound: &LstmBound,
    enc: &LstmEncoding,
    dec_state: NodeId, // [B, H]
    hidden: usize,
) -> Result<NodeId> {
    let (b, l) = (enc.batch, enc.len);
    let w_dec = g.narrow(bound.attn_w, 0, hidden, hidden)?;
    let dec_proj = g.matmul(dec_state, w_dec)?; // [B, H]
    let dec_proj3 = g.reshape(dec_proj, vec![b, 1, hidden])?;
    let summed = g.add(enc.enc_proj, dec_proj3)?; // [B, L, H]
    let act = g.tanh(summed);
    let act2 = g.reshape(act, vec![b * l, hidden])?;
    let scores = g.matmul(act2, bound.attn_v)?; // [B*L, 1]
    let scores = g.reshape(scores, vec![b, l])?;
    let masked = g.add(scores, enc.attn_mask)?;
    let weights = g.softmax(masked, 1)?; // [B, L]
    let w3 = g.reshape(weights, vec![b, 1, l])?;
    let ctx = g.matmul(w3, enc.outputs)?; // [B, 1, H]
    g.reshape(ctx, vec![b, hidden])
}

/// Single-sequence additive attention, exposed for inspection and tests.
/// Errors when every position is masked out.
pub fn attend(
    params: &LstmGeneratorParams,
    decoder_state: &[f32],
    encoder_outputs: &Tensor, // [L, H]
    mask: &[bool],
) -> Result<Vec<f32>> {
    if mask.iter().all(|&m| !m) {
        return Err(TensorError::Contract {
            op: "attend",
            reason: "attention mask excludes every position".into(),
        });
    }
    let h = params.dims.hidden;
    let l = encoder_outputs.shape()[0];
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let outputs3 = {
        let c = g.constant(encoder_outputs.clone());
        g.reshape(c, vec![1, l, h])?
    };
    let enc_flat = g.reshape(outputs3, vec![l, h])?;
    let w_enc = g.narrow(bound.attn_w, 0, 0, h)?;
    let proj = g.matmul(enc_flat, w_enc)?;
    let proj = g.add(proj, bound.attn_b)?;
    let enc_proj = g.reshape(proj, vec![1, l, h])?;
    let mask_vals: Vec<f32> = mask
        .iter()
        .map(|&m| if m { 0.0 } else { f32::NEG_INFINITY })
        .collect();
    let attn_mask = g.constant(Tensor::new(vec![1, l], mask_vals)?);
    let enc = LstmEncoding {
        outputs: outputs3,
        final_h: outputs3,
        final_c: outputs3,
        enc_proj,
        attn_mask,
        batch: 1,
        len: l,
    };
    let state = g.constant(Tensor::new(vec![1, h], decoder_state.to_vec())?);
    let ctx = attend_batch(&mut g, &bound, &enc, state, h)?;
    Ok(g.data(ctx).to_vec())
}

impl LstmGeneratorParams {
    /// Run the encoder over a batch of model-bound sequences.
    pub fn encode_batch(
        &self,
        g: &mut Graph,
        bound: &LstmBound,
        src: &[TokenSequence],
    ) -> Result<LstmEncoding> {
        let (b, l, h, e) = (
            src.len(),
            self.dims.max_len,
            self.dims.hidden,
            self.dims.embed,
        );
        debug_assert!(src.iter().all(|s| s.len() == l));
        let ids: Vec<u32> = src.iter().flat_map(|s| s.ids.iter().copied()).collect();
        let x_all = g.embedding_ids(bound.embed, &ids)?; // [B*L, E]
        let x_all = g.reshape(x_all, vec![b, l, e])?;

        let mut h_t = g.constant(Tensor::zeros(vec![b, h]));
        let mut c_t = g.constant(Tensor::zeros(vec![b, h]));
        let mut final_h = g.constant(Tensor::zeros(vec![b, h]));
        let mut final_c = g.constant(Tensor::zeros(vec![b, h]));
        let mut steps = Vec::with_capacity(l);

        for t in 0..l {
            let x3 = g.narrow(x_all, 1, t, 1)?;
            let x = g.reshape(x3, vec![b, e])?;
            let (nh, nc) = lstm_cell(
                g,
                x,
                h_t,
                c_t,
                bound.enc_w_ih,
                bound.enc_w_hh,
                bound.enc_b,
                h,
            )?;
            h_t = nh;
            c_t = nc;
            steps.push(g.reshape(nh, vec![b, 1, h])?);

            // Gather (h, c) at each sentence's EOS position.
            let sel: Vec<f32> = src
                .iter()
                .map(|s| if s.content_len() == t + 1 { 1.0 } else { 0.0 })
                .collect();
            if sel.iter().any(|&v| v != 0.0) {
                let sel = g.constant(Tensor::new(vec![b, 1], sel)?);
                let hm = g.mul(nh, sel)?;
                let cm = g.mul(nc, sel)?;
                final_h = g.add(final_h, hm)?;
                final_c = g.add(final_c, cm)?;
            }
        }

        let outputs = g.concat(&steps, 1)?; // [B, L, H]
        let flat = g.reshape(outputs, vec![b * l, h])?;
        let w_enc = g.narrow(bound.attn_w, 0, 0, h)?;
        let proj = g.matmul(flat, w_enc)?;
        let proj = g.add(proj, bound.attn_b)?;
        let enc_proj = g.reshape(proj, vec![b, l, h])?;

        let mask_vals: Vec<f32> = src
            .iter()
            .flat_map(|s| {
                s.ids
                    .iter()
                    .map(|&id| if id == PAD { f32::NEG_INFINITY } else { 0.0 })
            })
            .collect();
        let attn_mask = g.constant(Tensor::new(vec![b, l], mask_vals)?);

        Ok(LstmEncoding {
            outputs,
            final_h,
            final_c,
            enc_proj,
            attn_mask,
            batch: b,
            len: l,
        })
    }

    /// Teacher-forced decoder logits for the whole batch: step i consumes
    /// target token i-1 (BOS at step 0) and predicts target token i.
    /// Returns logits of shape [B, L, V].
    pub fn decode_teacher_logits(
        &self,
        g: &mut Graph,
        bound: &LstmBound,
        enc: &LstmEncoding,
        tgt: &[TokenSequence],
    ) -> Result<NodeId> {
        let (b, l, h, e, v) = (
            enc.batch,
            enc.len,
            self.dims.hidden,
            self.dims.embed,
            self.dims.vocab,
        );
        // Shifted decoder inputs.
        let ids: Vec<u32> = tgt
            .iter()
            .flat_map(|s| {
                std::iter::once(BOS).chain(s.ids[..l - 1].iter().copied())
            })
            .collect();
        let x_all = g.embedding_ids(bound.embed, &ids)?;
        let x_all = g.reshape(x_all, vec![b, l, e])?;

        let mut h_t = enc.final_h;
        let mut c_t = enc.final_c;
        let mut logit_steps = Vec::with_capacity(l);
        for t in 0..l {
            let ctx = attend_batch(g, bound, enc, h_t, h)?;
            let x3 = g.narrow(x_all, 1, t, 1)?;
            let x = g.reshape(x3, vec![b, e])?;
            let lstm_in = g.concat(&[x, ctx], 1)?; // [B, E+H]
            let (nh, nc) = lstm_cell(
                g,
                lstm_in,
                h_t,
                c_t,
                bound.dec_w_ih,
                bound.dec_w_hh,
                bound.dec_b,
                h,
            )?;
            h_t = nh;
            c_t = nc;
            let raw = g.matmul(nh, bound.out_w)?;
            let logits_t = g.add(raw, bound.out_b)?; // [B, V]
            logit_steps.push(g.reshape(logits_t, vec![b, 1, v])?);
        }
        g.concat(&logit_steps, 1) // [B, L, V]
    }

    /// Teacher-forced soft samples for adversarial training:
    /// soft = gumbel_softmax(logits, tau, seeded noise). Returns (soft, logits),
    /// both [B, L, V].
    pub fn decode_train(
        &self,
        g: &mut Graph,
        bound: &LstmBound,
        enc: &LstmEncoding,
        tgt: &[TokenSequence],
        tau: f32,
        noise_seed: u64,
    ) -> Result<(NodeId, NodeId)> {
        let logits = self.decode_teacher_logits(g, bound, enc, tgt)?;
        let (b, l, v) = (enc.batch, enc.len, self.dims.vocab);
        let mut rng = Rng::new(noise_seed);
        let noise: Vec<f32> = (0..b * l * v).map(|_| rng.gumbel()).collect();
        let noise = g.constant(Tensor::new(vec![b, l, v], noise)?);
        let soft = g.gumbel_softmax(logits, tau, noise)?;
        Ok((soft, logits))
    }

    /// Autoregressive argmax decoding for a batch of sources. Every output is
    /// model-bound: BOS first, then tokens until EOS (or truncation), PAD tail.
    pub fn decode_greedy_batch(&self, src: &[TokenSequence]) -> Vec<TokenSequence> {
        let (b, l, h, e, v) = (
            src.len(),
            self.dims.max_len,
            self.dims.hidden,
            self.dims.embed,
            self.dims.vocab,
        );
        let mut g = Graph::new();
        let bound = self.bind(&mut g, true);
        let enc = self
            .encode_batch(&mut g, &bound, src)
            .expect("encode_batch on model-bound input");

        let mut out: Vec<Vec<u32>> = vec![vec![BOS]; b];
        let mut done = vec![false; b];
        let mut h_t = enc.final_h;
        let mut c_t = enc.final_c;
        let mut inputs: Vec<u32> = vec![BOS; b];
        // Step 0 consumes BOS and predicts the (forced) BOS slot; only its
        // state update matters. Steps t >= 1 emit output position t from
        // input out[t-1], mirroring the teacher-forcing alignment.
        for t in 0..l {
            let ctx = attend_batch(&mut g, &bound, &enc, h_t, h).unwrap();
            let x = g.embedding_ids(bound.embed, &inputs).unwrap();
            let x = g.reshape(x, vec![b, e]).unwrap();
            let lstm_in = g.concat(&[x, ctx], 1).unwrap();
            let (nh, nc) = lstm_cell(
                &mut g,
                lstm_in,
                h_t,
                c_t,
                bound.dec_w_ih,
                bound.dec_w_hh,
                bound.dec_b,
                h,
            )
            .unwrap();
            h_t = nh;
            c_t = nc;
            if t == 0 {
                continue; // inputs stay BOS: step 1 consumes out[0] = BOS
            }
            let raw = g.matmul(nh, bound.out_w).unwrap();
            let logits = g.add(raw, bound.out_b).unwrap();
            let data = g.data(logits);
            for bi in 0..b {
                if done[bi] {
                    out[bi].push(PAD);
                    inputs[bi] = PAD;
                    continue;
                }
                let row = &data[bi * v..(bi + 1) * v];
                let tok = argmax_non_pad(row) as u32;
                out[bi].push(tok);
                inputs[bi] = tok;
                if tok == EOS {
                    done[bi] = true;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        out.into_iter()
            .map(|mut ids| {
                ids.resize(l, PAD);
                TokenSequence::new(ids)
            })
            .collect()
    }

    pub fn decode_greedy(&self, src: &TokenSequence) -> TokenSequence {
        self.decode_greedy_batch(std::slice::from_ref(src))
            .pop()
            .unwrap()
    }

    /// Per-step encoder outputs for one sentence as an owned tensor [L, H],
    /// used by evaluation for sentence embeddings.
    pub fn encoder_outputs(&self, src: &TokenSequence) -> Tensor {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, true);
        let enc = self
            .encode_batch(&mut g, &bound, std::slice::from_ref(src))
            .expect("encode_batch on model-bound input");
        let l = self.dims.max_len;
        let h = self.dims.hidden;
        Tensor::new(vec![l, h], g.data(enc.outputs).to_vec()).unwrap()
    }
}

pub(crate) fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Greedy decoding never emits PAD before EOS, so PAD is excluded from the
/// candidate set.
pub(crate) fn argmax_non_pad(row: &[f32]) -> usize {
    let mut best = EOS as usize;
    let mut best_v = f32::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if i as u32 != PAD && v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{encode, tokenize, Vocabulary};

    fn tiny() -> (LstmGeneratorParams, Vocabulary) {
        let corpus: Vec<Vec<String>> = ["the cat sees the dog .", "a bird likes the river ."]
            .iter()
            .map(|s| tokenize(s))
            .collect();
        let vocab = Vocabulary::build(&corpus, 32).unwrap();
        let dims = LstmDims {
            vocab: vocab.size(),
            embed: 8,
            hidden: 12,
            max_len: 10,
        };
        (LstmGeneratorParams::new(dims, 7), vocab)
    }

    #[test]
    fn encoder_output_shape_is_len_by_hidden() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("the cat sees the dog ."), &vocab, 10);
        let out = params.encoder_outputs(&seq);
        assert_eq!(out.shape(), &[10, 12]);
        assert!(out.all_finite());
    }

    #[test]
    fn different_sentences_reach_different_final_states() {
        let (params, vocab) = tiny();
        let a = encode(&tokenize("the cat sees the dog ."), &vocab, 10);
        let b = encode(&tokenize("a bird likes the river ."), &vocab, 10);
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let enc = params.encode_batch(&mut g, &bound, &[a, b]).unwrap();
        let h = g.data(enc.final_h);
        let (row_a, row_b) = (&h[..12], &h[12..]);
        assert!(row_a.iter().zip(row_b).any(|(x, y)| (x - y).abs() > 1e-7));
    }

    #[test]
    fn empty_content_still_encodes_finite() {
        let (params, vocab) = tiny();
        let seq = encode(&[], &vocab, 10); // BOS, EOS, PAD..
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let enc = params
            .encode_batch(&mut g, &bound, std::slice::from_ref(&seq))
            .unwrap();
        assert!(g.data(enc.final_h).iter().all(|v| v.is_finite()));
        assert!(g.data(enc.final_c).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn attend_single_unmasked_position_returns_that_output() {
        let (params, _) = tiny();
        let h = params.dims.hidden;
        let mut rng = Rng::new(3);
        let outputs = Tensor::param_uniform(vec![4, h], 1.0, &mut rng);
        let state: Vec<f32> = (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mask = [false, false, true, false];
        let ctx = attend(&params, &state, &outputs, &mask).unwrap();
        let expected = &outputs.data()[2 * h..3 * h];
        for (c, e) in ctx.iter().zip(expected) {
            assert!((c - e).abs() < 1e-6);
        }
    }

    #[test]
    fn attend_rejects_fully_masked_input() {
        let (params, _) = tiny();
        let h = params.dims.hidden;
        let outputs = Tensor::zeros(vec![3, h]);
        let state = vec![0.0; h];
        let err = attend(&params, &state, &outputs, &[false, false, false]).unwrap_err();
        assert!(matches!(err, TensorError::Contract { .. }));
    }

    #[test]
    fn attention_weights_sum_to_one_over_unmasked() {
        // Uniform scores arise with zeroed attention parameters; the context
        // is then the mean of unmasked outputs.
        let (mut params, vocab) = tiny();
        for t in [&mut params.attn_w, &mut params.attn_b, &mut params.attn_v] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let h = params.dims.hidden;
        let seq = encode(&tokenize("the cat sees ."), &vocab, 10);
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let enc = params
            .encode_batch(&mut g, &bound, std::slice::from_ref(&seq))
            .unwrap();
        let state = g.constant(Tensor::zeros(vec![1, h]));
        let ctx = attend_batch(&mut g, &bound, &enc, state, h).unwrap();
        let n = seq.content_len();
        let outs = g.data(enc.outputs);
        let mut mean = vec![0.0f32; h];
        for t in 0..n {
            for i in 0..h {
                mean[i] += outs[t * h + i] / n as f32;
            }
        }
        for (c, m) in g.data(ctx).iter().zip(&mean) {
            assert!((c - m).abs() < 1e-5, "{c} vs {m}");
        }
    }

    #[test]
    fn decode_train_rows_are_distributions() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("the cat sees the dog ."), &vocab, 10);
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let enc = params
            .encode_batch(&mut g, &bound, std::slice::from_ref(&seq))
            .unwrap();
        let (soft, logits) = params
            .decode_train(&mut g, &bound, &enc, std::slice::from_ref(&seq), 1.0, 99)
            .unwrap();
        assert_eq!(g.shape(soft), &[1, 10, params.dims.vocab]);
        assert_eq!(g.shape(logits), &[1, 10, params.dims.vocab]);
        for row in g.data(soft).chunks(params.dims.vocab) {
            let sum: f32 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-5);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn decode_train_low_tau_rows_near_one_hot() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("a bird likes the river ."), &vocab, 10);
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let enc = params
            .encode_batch(&mut g, &bound, std::slice::from_ref(&seq))
            .unwrap();
        let (soft, logits) = params
            .decode_train(&mut g, &bound, &enc, std::slice::from_ref(&seq), 0.01, 5)
            .unwrap();
        // Reconstruct the perturbed argmax independently: same noise stream.
        let v = params.dims.vocab;
        let mut rng = Rng::new(5);
        let noise: Vec<f32> = (0..10 * v).map(|_| rng.gumbel()).collect();
        for (row_i, (soft_row, logit_row)) in g
            .data(soft)
            .chunks(v)
            .zip(g.data(logits).chunks(v))
            .enumerate()
        {
            let perturbed: Vec<f32> = logit_row
                .iter()
                .zip(&noise[row_i * v..(row_i + 1) * v])
                .map(|(&l, &n)| l + n)
                .collect();
            let am = argmax(&perturbed);
            for (i, &p) in soft_row.iter().enumerate() {
                let want = if i == am { 1.0 } else { 0.0 };
                assert!((p - want).abs() < 1e-3, "row {row_i} comp {i}: {p}");
            }
        }
    }

    #[test]
    fn decode_train_rejects_bad_tau() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("the cat sees ."), &vocab, 10);
        let mut g = Graph::new();
        let bound = params.bind(&mut g, true);
        let enc = params
            .encode_batch(&mut g, &bound, std::slice::from_ref(&seq))
            .unwrap();
        assert!(params
            .decode_train(&mut g, &bound, &enc, std::slice::from_ref(&seq), 0.0, 1)
            .is_err());
    }

    #[test]
    fn every_parameter_receives_gradient_through_gumbel_path() {
        let (params, vocab) = tiny();
        let seqs: Vec<TokenSequence> = ["the cat sees the dog .", "a bird likes the river ."]
            .iter()
            .map(|s| encode(&tokenize(s), &vocab, 10))
            .collect();
        let mut g = Graph::new();
        let bound = params.bind(&mut g, false);
        let enc = params.encode_batch(&mut g, &bound, &seqs).unwrap();
        let (soft, _) = params
            .decode_train(&mut g, &bound, &enc, &seqs, 1.0, 17)
            .unwrap();
        // A generic scalar head over the soft samples stands in for the
        // discriminator: if its gradient reaches every tensor, the
        // Gumbel-softmax path is unbroken.
        let loss = g.mean(soft, None).unwrap();
        g.backward(loss).unwrap();
        for ((name, _), id) in params.named_params().iter().zip(bound.ordered()) {
            let grad = g
                .grad_of(id)
                .unwrap_or_else(|| panic!("no grad for {name}"));
            assert!(
                grad.iter().any(|&v| v != 0.0),
                "all-zero gradient for {name}"
            );
        }
    }

    #[test]
    fn greedy_decode_is_model_bound_and_deterministic() {
        let (params, vocab) = tiny();
        let seq = encode(&tokenize("the cat sees the dog ."), &vocab, 10);
        let a = params.decode_greedy(&seq);
        let b = params.decode_greedy(&seq);
        assert_eq!(a, b);
        assert_eq!(a.ids[0], BOS);
        assert_eq!(a.len(), 10);
        // PAD only after EOS.
        let mut seen_eos = false;
        for &id in &a.ids[1..] {
            if seen_eos {
                assert_eq!(id, PAD);
            }
            if id == EOS {
                seen_eos = true;
            }
            if !seen_eos {
                assert_ne!(id, PAD, "PAD before EOS in {a}");
            }
        }
    }
}
