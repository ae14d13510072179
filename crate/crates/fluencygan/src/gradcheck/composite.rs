//! End-to-end gradient checks of the full training losses.
//!
//! Three composites: the complete generator loss L_G = L_AE - lambda *
//! log D(G(s)) through each generator (gradients w.r.t. every generator
//! parameter, discriminator frozen), and the discriminator loss w.r.t. every
//! discriminator parameter. The oracle route re-implements each whole
//! pipeline in f64 on top of the per-op reference functions in
//! [`super::oracle`], then central finite differences give the reference
//! gradients. A two-sentence batch keeps the runs fast.

use super::oracle;
use super::{OpReport, COMPOSITE_EPS, COMPOSITE_TOLERANCE};

fn check_instance(
    inputs: &[crate::tensor::Tensor],
    build: impl Fn(&mut crate::tensor::Graph, &[crate::tensor::NodeId]) -> crate::tensor::NodeId,
    oracle_loss: impl Fn(&[Vec<f64>]) -> f64,
) -> f64 {
    super::check_instance_verbose(inputs, build, oracle_loss, COMPOSITE_EPS, None)
}
use crate::discriminator::{DiscriminatorBound, DiscriminatorDims, DiscriminatorParams};
use crate::discriminator::{CONV_WIDTHS, FILTERS_PER_WIDTH};
use crate::lstm::{LstmBound, LstmDims, LstmGeneratorParams};
use crate::rng::Rng;
use crate::tensor::{one_hot_rows, NodeId, Tensor};
use crate::text::{TokenSequence, BOS, EOS, PAD};
use crate::train::{loss_ae, loss_discriminator, loss_dg, loss_generator, pad_tail_override};
use crate::transformer::{TransformerBound, TransformerDims, TransformerParams};

const VOCAB: usize = 10;
const MAX_LEN: usize = 7;
const TAU: f32 = 0.8;
const LAMBDA: f32 = 0.6;

fn to64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Two short random sentences, model-bound at MAX_LEN.
fn sample_batch(rng: &mut Rng) -> Vec<TokenSequence> {
    (0..2)
        .map(|_| {
            let content = 3 + rng.below(3); // 3..=5 tokens
            let mut ids = vec![BOS];
            for _ in 0..content {
                ids.push((4 + rng.below(VOCAB - 4)) as u32);
            }
            ids.push(EOS);
            ids.resize(MAX_LEN, PAD);
            TokenSequence::new(ids)
        })
        .collect()
}

// ---- f64 discriminator ----

struct DiscOracle {
    embed: Vec<f64>,
    kernels: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    dense_w: Vec<f64>,
    dense_b: Vec<f64>,
    out_w: Vec<f64>,
    out_b: Vec<f64>,
    embed_dim: usize,
    dense: usize,
}

impl DiscOracle {
    fn from_params(p: &DiscriminatorParams) -> Self {
        DiscOracle {
            embed: to64(p.embed.data()),
            kernels: p.conv_kernels.iter().map(|t| to64(t.data())).collect(),
            biases: p.conv_biases.iter().map(|t| to64(t.data())).collect(),
            dense_w: to64(p.dense_w.data()),
            dense_b: to64(p.dense_b.data()),
            out_w: to64(p.out_w.data()),
            out_b: to64(p.out_b.data()),
            embed_dim: p.dims.embed,
            dense: p.dims.dense,
        }
    }

    /// Buffers in `named_params` order, as produced for finite differencing.
    fn from_buffers(bufs: &[Vec<f64>], dims: &DiscriminatorDims) -> Self {
        DiscOracle {
            embed: bufs[0].clone(),
            kernels: vec![bufs[1].clone(), bufs[3].clone(), bufs[5].clone()],
            biases: vec![bufs[2].clone(), bufs[4].clone(), bufs[6].clone()],
            dense_w: bufs[7].clone(),
            dense_b: bufs[8].clone(),
            out_w: bufs[9].clone(),
            out_b: bufs[10].clone(),
            embed_dim: dims.embed,
            dense: dims.dense,
        }
    }

    /// Score one sentence given as a flat [L, V] distribution.
    fn score(&self, dist: &[f64]) -> f64 {
        let e = self.embed_dim;
        let embedded = oracle::matmul(dist, &self.embed, MAX_LEN, VOCAB, e);
        let mut features = Vec::new();
        for (i, &k) in CONV_WIDTHS.iter().enumerate() {
            let conv = oracle::conv1d(
                &embedded,
                &self.kernels[i],
                &self.biases[i],
                MAX_LEN,
                e,
                k,
                FILTERS_PER_WIDTH,
            );
            let relu: Vec<f64> = conv.iter().map(|&v| v.max(0.0)).collect();
            features.extend(oracle::max_pool_over_time(
                &relu,
                1,
                MAX_LEN - k + 1,
                FILTERS_PER_WIDTH,
            ));
        }
        let hidden = oracle::matmul(&features, &self.dense_w, 1, features.len(), self.dense);
        let hidden: Vec<f64> = hidden
            .iter()
            .zip(&self.dense_b)
            .map(|(&h, &b)| (h + b).max(0.0))
            .collect();
        let logit = oracle::matmul(&hidden, &self.out_w, 1, self.dense, 1)[0] + self.out_b[0];
        oracle::sigmoid(logit)
    }
}

fn clamp64(x: f64) -> f64 {
    x.clamp(1e-7, 1.0 - 1e-7)
}

/// soft rows within content, exact one-hot PAD after.
fn pad_override_rows(soft: &[f64], seq: &TokenSequence) -> Vec<f64> {
    let mut rows = vec![0.0f64; MAX_LEN * VOCAB];
    let n = seq.content_len();
    for t in 0..MAX_LEN {
        if t < n {
            rows[t * VOCAB..(t + 1) * VOCAB]
                .copy_from_slice(&soft[t * VOCAB..(t + 1) * VOCAB]);
        } else {
            rows[t * VOCAB + PAD as usize] = 1.0;
        }
    }
    rows
}

/// L_G from per-sentence logits: cross-entropy + lambda-weighted
/// adversarial term through the frozen discriminator.
fn l_g_from_logits(
    logits_per_sentence: &[Vec<f64>],
    batch: &[TokenSequence],
    noise: &[f64],
    disc: &DiscOracle,
) -> f64 {
    let mut all_logits = Vec::new();
    let mut all_targets = Vec::new();
    let mut all_mask = Vec::new();
    for (bi, seq) in batch.iter().enumerate() {
        all_logits.extend_from_slice(&logits_per_sentence[bi]);
        all_targets.extend(seq.ids.iter().copied());
        all_mask.extend(
            seq.ids
                .iter()
                .map(|&id| if id == PAD { 0.0f64 } else { 1.0 }),
        );
    }
    let l_ae = oracle::cross_entropy_rows(&all_logits, &all_targets, &all_mask, VOCAB);

    let mut sum_log_d = 0.0f64;
    for (bi, seq) in batch.iter().enumerate() {
        let noise_slice = &noise[bi * MAX_LEN * VOCAB..(bi + 1) * MAX_LEN * VOCAB];
        let soft = oracle::gumbel_softmax(
            &logits_per_sentence[bi],
            noise_slice,
            TAU as f64,
            VOCAB,
        );
        let d_input = pad_override_rows(&soft, seq);
        sum_log_d += clamp64(disc.score(&d_input)).ln();
    }
    let l_dg = sum_log_d / batch.len() as f64;
    l_ae - LAMBDA as f64 * l_dg
}

// ---- f64 LSTM forward ----

struct LstmOracle<'a> {
    bufs: &'a [Vec<f64>],
    dims: LstmDims,
}

impl<'a> LstmOracle<'a> {
    // Buffer indices follow LstmBound::ordered.
    fn embed(&self) -> &[f64] {
        &self.bufs[0]
    }

    fn cell(
        &self,
        which: usize, // 1 = encoder (w_ih, w_hh, b at 1..4), 4 = decoder
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hid = self.dims.hidden;
        let w_ih = &self.bufs[which];
        let w_hh = &self.bufs[which + 1];
        let b = &self.bufs[which + 2];
        let in_dim = x.len();
        let mut gates = b.clone();
        for (p, &xv) in x.iter().enumerate() {
            for j in 0..4 * hid {
                gates[j] += xv * w_ih[p * 4 * hid + j];
            }
        }
        let _ = in_dim;
        for (p, &hv) in h.iter().enumerate() {
            for j in 0..4 * hid {
                gates[j] += hv * w_hh[p * 4 * hid + j];
            }
        }
        let mut nh = vec![0.0f64; hid];
        let mut nc = vec![0.0f64; hid];
        for j in 0..hid {
            let i_g = oracle::sigmoid(gates[j]);
            let f_g = oracle::sigmoid(gates[hid + j]);
            let g_g = gates[2 * hid + j].tanh();
            let o_g = oracle::sigmoid(gates[3 * hid + j]);
            nc[j] = f_g * c[j] + i_g * g_g;
            nh[j] = o_g * nc[j].tanh();
        }
        (nh, nc)
    }

    /// Per-sentence logits [L, V] of the teacher-forced decode.
    fn teacher_logits(&self, seq: &TokenSequence) -> Vec<f64> {
        let (e, hid) = (self.dims.embed, self.dims.hidden);
        let attn_w = &self.bufs[7];
        let attn_b = &self.bufs[8];
        let attn_v = &self.bufs[9];
        let out_w = &self.bufs[10];
        let out_b = &self.bufs[11];

        // Encoder.
        let mut h = vec![0.0f64; hid];
        let mut c = vec![0.0f64; hid];
        let mut outputs = Vec::with_capacity(MAX_LEN);
        let mut final_h = vec![0.0f64; hid];
        let mut final_c = vec![0.0f64; hid];
        for t in 0..MAX_LEN {
            let id = seq.ids[t] as usize;
            let x = &self.embed()[id * e..(id + 1) * e];
            let (nh, nc) = self.cell(1, x, &h, &c);
            h = nh;
            c = nc;
            outputs.push(h.clone());
            if seq.content_len() == t + 1 {
                final_h = h.clone();
                final_c = c.clone();
            }
        }
        // Attention projection of encoder outputs: out * W[..hid] + b.
        let enc_proj: Vec<Vec<f64>> = outputs
            .iter()
            .map(|o| {
                let mut p = attn_b.clone();
                for (r, &ov) in o.iter().enumerate() {
                    for j in 0..hid {
                        p[j] += ov * attn_w[r * hid + j];
                    }
                }
                p
            })
            .collect();

        // Decoder with teacher forcing.
        let mut dh = final_h;
        let mut dc = final_c;
        let mut logits = Vec::with_capacity(MAX_LEN * VOCAB);
        for t in 0..MAX_LEN {
            // Additive attention from the previous decoder state.
            let mut dec_proj = vec![0.0f64; hid];
            for (r, &hv) in dh.iter().enumerate() {
                for j in 0..hid {
                    dec_proj[j] += hv * attn_w[(hid + r) * hid + j];
                }
            }
            let mut scores = Vec::with_capacity(MAX_LEN);
            for (ti, proj) in enc_proj.iter().enumerate() {
                if seq.ids[ti] == PAD {
                    scores.push(f64::NEG_INFINITY);
                } else {
                    let mut s = 0.0f64;
                    for j in 0..hid {
                        s += (proj[j] + dec_proj[j]).tanh() * attn_v[j];
                    }
                    scores.push(s);
                }
            }
            let weights = oracle::softmax_row(&scores);
            let mut ctx = vec![0.0f64; hid];
            for (ti, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    for j in 0..hid {
                        ctx[j] += w * outputs[ti][j];
                    }
                }
            }
            let in_id = if t == 0 { BOS } else { seq.ids[t - 1] } as usize;
            let mut lstm_in = self.embed()[in_id * e..(in_id + 1) * e].to_vec();
            lstm_in.extend_from_slice(&ctx);
            let (nh, nc) = self.cell(4, &lstm_in, &dh, &dc);
            dh = nh;
            dc = nc;
            for vcol in 0..VOCAB {
                let mut l = out_b[vcol];
                for (r, &hv) in dh.iter().enumerate() {
                    l += hv * out_w[r * VOCAB + vcol];
                }
                logits.push(l);
            }
        }
        logits
    }
}

fn lstm_bound_from(ids: &[NodeId]) -> LstmBound {
    LstmBound {
        embed: ids[0],
        enc_w_ih: ids[1],
        enc_w_hh: ids[2],
        enc_b: ids[3],
        dec_w_ih: ids[4],
        dec_w_hh: ids[5],
        dec_b: ids[6],
        attn_w: ids[7],
        attn_b: ids[8],
        attn_v: ids[9],
        out_w: ids[10],
        out_b: ids[11],
    }
}

fn lstm_instance(rng: &mut Rng) -> f64 {
    let dims = LstmDims {
        vocab: VOCAB,
        embed: 4,
        hidden: 5,
        max_len: MAX_LEN,
    };
    let gen = LstmGeneratorParams::new(dims, rng.next_u64());
    let disc = DiscriminatorParams::new(
        DiscriminatorDims {
            vocab: VOCAB,
            embed: 4,
            dense: 6,
            max_len: MAX_LEN,
        },
        rng.next_u64(),
    );
    let batch = sample_batch(rng);
    let noise: Vec<f32> = (0..2 * MAX_LEN * VOCAB).map(|_| rng.gumbel()).collect();
    let noise64 = to64(&noise);
    let disc_oracle = DiscOracle::from_params(&disc);

    let inputs: Vec<Tensor> = gen
        .named_params()
        .iter()
        .map(|(_, t)| (*t).clone())
        .collect();
    let batch2 = batch.clone();
    let noise_t = Tensor::new(vec![2, MAX_LEN, VOCAB], noise).unwrap();

    check_instance(
        &inputs,
        |g, ids| {
            let bound = lstm_bound_from(ids);
            let enc = gen.encode_batch(g, &bound, &batch).unwrap();
            let logits = gen.decode_teacher_logits(g, &bound, &enc, &batch).unwrap();
            let noise_c = g.constant(noise_t.clone());
            let soft = g.gumbel_softmax(logits, TAU, noise_c).unwrap();
            let l_ae = loss_ae(g, logits, &batch).unwrap();
            let d_input = pad_tail_override(g, soft, &batch).unwrap();
            let dbound = disc.bind(g, true);
            let scores = disc.score_dist_batch(g, &dbound, d_input).unwrap();
            let l_dg = loss_dg(g, scores).unwrap();
            loss_generator(g, l_ae, l_dg, LAMBDA).unwrap()
        },
        move |bufs| {
            let oracle_gen = LstmOracle { bufs, dims };
            let logits: Vec<Vec<f64>> = batch2
                .iter()
                .map(|seq| oracle_gen.teacher_logits(seq))
                .collect();
            l_g_from_logits(&logits, &batch2, &noise64, &disc_oracle)
        },
    )
}

// ---- f64 transformer forward ----

struct TfCursor<'a> {
    bufs: &'a [Vec<f64>],
    next: usize,
}

impl<'a> TfCursor<'a> {
    fn take(&mut self) -> &'a [f64] {
        let s = &self.bufs[self.next];
        self.next += 1;
        s
    }
}

struct TfOracle<'a> {
    bufs: &'a [Vec<f64>],
    dims: TransformerDims,
    positional: Vec<f64>,
}

impl<'a> TfOracle<'a> {
    fn layer_norm_rows(x: &[f64], gamma: &[f64], beta: &[f64], d: usize) -> Vec<f64> {
        oracle::layer_norm(x, gamma, beta, x.len() / d, d, 1e-5)
    }

    fn embed_positions(&self, ids: &[u32]) -> Vec<f64> {
        let d = self.dims.model;
        let scale = (d as f32).sqrt() as f64;
        let mut out = Vec::with_capacity(ids.len() * d);
        for (pos, &id) in ids.iter().enumerate() {
            let row = &self.bufs[0][id as usize * d..(id as usize + 1) * d];
            let pos_row = &self.positional[(pos % MAX_LEN) * d..(pos % MAX_LEN + 1) * d];
            for j in 0..d {
                out.push(row[j] * scale + pos_row[j]);
            }
        }
        out
    }

    /// Multi-head attention over one sentence; `visible(i, j)` gates keys.
    #[allow(clippy::too_many_arguments)]
    fn mha(
        &self,
        q_in: &[f64],
        kv_in: &[f64],
        wq: &[f64],
        wk: &[f64],
        wv: &[f64],
        wo: &[f64],
        lq: usize,
        lk: usize,
        visible: impl Fn(usize, usize) -> bool,
    ) -> Vec<f64> {
        let d = self.dims.model;
        let a = self.dims.heads;
        let dh = d / a;
        let q = oracle::matmul(q_in, wq, lq, d, d);
        let k = oracle::matmul(kv_in, wk, lk, d, d);
        let v = oracle::matmul(kv_in, wv, lk, d, d);
        let mut merged = vec![0.0f64; lq * d];
        for h in 0..a {
            for i in 0..lq {
                let qrow = &q[i * d + h * dh..i * d + (h + 1) * dh];
                let mut scores = Vec::with_capacity(lk);
                for j in 0..lk {
                    if visible(i, j) {
                        let krow = &k[j * d + h * dh..j * d + (h + 1) * dh];
                        let dot: f64 = qrow.iter().zip(krow).map(|(&x, &y)| x * y).sum();
                        scores.push(dot / (dh as f32).sqrt() as f64);
                    } else {
                        scores.push(f64::NEG_INFINITY);
                    }
                }
                let weights = oracle::softmax_row(&scores);
                for (j, w) in weights.iter().enumerate() {
                    if *w > 0.0 {
                        let vrow = &v[j * d + h * dh..j * d + (h + 1) * dh];
                        for x in 0..dh {
                            merged[i * d + h * dh + x] += w * vrow[x];
                        }
                    }
                }
            }
        }
        oracle::matmul(&merged, wo, lq, d, d)
    }

    fn feed_forward(&self, x: &[f64], w1: &[f64], w2: &[f64], rows: usize) -> Vec<f64> {
        let (d, f) = (self.dims.model, self.dims.ff);
        let h = oracle::matmul(x, w1, rows, d, f);
        let h: Vec<f64> = h.iter().map(|&v| v.max(0.0)).collect();
        oracle::matmul(&h, w2, rows, f, d)
    }

    /// Teacher-forced logits for one sentence, [L * V].
    fn teacher_logits(&self, seq: &TokenSequence) -> Vec<f64> {
        let d = self.dims.model;
        let src_ids = &seq.ids;
        let dec_ids: Vec<u32> = std::iter::once(BOS)
            .chain(seq.ids[..MAX_LEN - 1].iter().copied())
            .collect();
        let src_real: Vec<bool> = src_ids.iter().map(|&id| id != PAD).collect();
        let dec_real: Vec<bool> = dec_ids.iter().map(|&id| id != PAD).collect();

        let mut cursor = TfCursor {
            bufs: self.bufs,
            next: 1, // after embed
        };
        // Encoder.
        let mut x = self.embed_positions(src_ids);
        for _ in 0..self.dims.enc_layers {
            let (wq, wk, wv, wo) = (cursor.take(), cursor.take(), cursor.take(), cursor.take());
            let attn = self.mha(&x, &x, wq, wk, wv, wo, MAX_LEN, MAX_LEN, |_, j| src_real[j]);
            let (g1, b1) = (cursor.take(), cursor.take());
            let sum: Vec<f64> = x.iter().zip(&attn).map(|(&a, &b)| a + b).collect();
            x = Self::layer_norm_rows(&sum, g1, b1, d);
            let (w1, w2) = (cursor.take(), cursor.take());
            let ff = self.feed_forward(&x, w1, w2, MAX_LEN);
            let (g2, b2) = (cursor.take(), cursor.take());
            let sum: Vec<f64> = x.iter().zip(&ff).map(|(&a, &b)| a + b).collect();
            x = Self::layer_norm_rows(&sum, g2, b2, d);
        }
        let enc_out = x;

        // Decoder.
        let mut y = self.embed_positions(&dec_ids);
        for _ in 0..self.dims.dec_layers {
            let (wq, wk, wv, wo) = (cursor.take(), cursor.take(), cursor.take(), cursor.take());
            let attn = self.mha(&y, &y, wq, wk, wv, wo, MAX_LEN, MAX_LEN, |i, j| {
                j <= i && dec_real[j]
            });
            let (g1, b1) = (cursor.take(), cursor.take());
            let sum: Vec<f64> = y.iter().zip(&attn).map(|(&a, &b)| a + b).collect();
            y = Self::layer_norm_rows(&sum, g1, b1, d);

            let (cq, ck, cv, co) = (cursor.take(), cursor.take(), cursor.take(), cursor.take());
            let cross = self.mha(&y, &enc_out, cq, ck, cv, co, MAX_LEN, MAX_LEN, |_, j| {
                src_real[j]
            });
            let (g2, b2) = (cursor.take(), cursor.take());
            let sum: Vec<f64> = y.iter().zip(&cross).map(|(&a, &b)| a + b).collect();
            y = Self::layer_norm_rows(&sum, g2, b2, d);

            let (w1, w2) = (cursor.take(), cursor.take());
            let ff = self.feed_forward(&y, w1, w2, MAX_LEN);
            let (g3, b3) = (cursor.take(), cursor.take());
            let sum: Vec<f64> = y.iter().zip(&ff).map(|(&a, &b)| a + b).collect();
            y = Self::layer_norm_rows(&sum, g3, b3, d);
        }
        let out_w = cursor.take();
        oracle::matmul(&y, out_w, MAX_LEN, d, VOCAB)
    }
}

fn transformer_instance(rng: &mut Rng) -> f64 {
    let dims = TransformerDims {
        vocab: VOCAB,
        model: 8,
        heads: 2,
        ff: 12,
        enc_layers: 1,
        dec_layers: 1,
        max_len: MAX_LEN,
        dropout: 0.0,
    };
    let gen = TransformerParams::new(dims, rng.next_u64());
    let disc = DiscriminatorParams::new(
        DiscriminatorDims {
            vocab: VOCAB,
            embed: 4,
            dense: 6,
            max_len: MAX_LEN,
        },
        rng.next_u64(),
    );
    let batch = sample_batch(rng);
    let noise: Vec<f32> = (0..2 * MAX_LEN * VOCAB).map(|_| rng.gumbel()).collect();
    let noise64 = to64(&noise);
    let disc_oracle = DiscOracle::from_params(&disc);
    let positional64 = to64(gen.positional.data());

    let inputs: Vec<Tensor> = gen
        .named_params()
        .iter()
        .map(|(_, t)| (*t).clone())
        .collect();
    let batch2 = batch.clone();
    let noise_t = Tensor::new(vec![2, MAX_LEN, VOCAB], noise).unwrap();
    let positional = gen.positional.clone();

    check_instance(
        &inputs,
        |g, ids| {
            let bound = TransformerBound {
                params: ids.to_vec(),
                positional: g.constant(positional.clone()),
            };
            let fwd = gen.forward(g, &bound, &batch, &batch, None).unwrap();
            let noise_c = g.constant(noise_t.clone());
            let soft = g.gumbel_softmax(fwd.logits, TAU, noise_c).unwrap();
            let l_ae = loss_ae(g, fwd.logits, &batch).unwrap();
            let d_input = pad_tail_override(g, soft, &batch).unwrap();
            let dbound = disc.bind(g, true);
            let scores = disc.score_dist_batch(g, &dbound, d_input).unwrap();
            let l_dg = loss_dg(g, scores).unwrap();
            loss_generator(g, l_ae, l_dg, LAMBDA).unwrap()
        },
        move |bufs| {
            let oracle_gen = TfOracle {
                bufs,
                dims,
                positional: positional64.clone(),
            };
            let logits: Vec<Vec<f64>> = batch2
                .iter()
                .map(|seq| oracle_gen.teacher_logits(seq))
                .collect();
            l_g_from_logits(&logits, &batch2, &noise64, &disc_oracle)
        },
    )
}

// ---- discriminator loss composite ----

fn disc_bound_from(ids: &[NodeId]) -> DiscriminatorBound {
    DiscriminatorBound {
        embed: ids[0],
        conv_kernels: vec![ids[1], ids[3], ids[5]],
        conv_biases: vec![ids[2], ids[4], ids[6]],
        dense_w: ids[7],
        dense_b: ids[8],
        out_w: ids[9],
        out_b: ids[10],
    }
}

fn discriminator_instance(rng: &mut Rng) -> f64 {
    discriminator_instance_verbose(rng, None)
}

fn discriminator_instance_verbose(rng: &mut Rng, per: Option<&mut Vec<f64>>) -> f64 {
    let dims = DiscriminatorDims {
        vocab: VOCAB,
        embed: 4,
        dense: 6,
        max_len: MAX_LEN,
    };
    let disc = DiscriminatorParams::new(dims, rng.next_u64());
    let real = sample_batch(rng);
    // A smooth fake batch: softmax rows on content, one-hot PAD tails.
    let fake_seqs = sample_batch(rng);
    let mut fake_rows = vec![0.0f32; 2 * MAX_LEN * VOCAB];
    for (bi, seq) in fake_seqs.iter().enumerate() {
        for t in 0..MAX_LEN {
            let row = &mut fake_rows[(bi * MAX_LEN + t) * VOCAB..(bi * MAX_LEN + t + 1) * VOCAB];
            if t < seq.content_len() {
                let logits: Vec<f32> = (0..VOCAB).map(|_| rng.uniform(-2.0, 2.0)).collect();
                let m = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let exps: Vec<f32> = logits.iter().map(|&x| (x - m).exp()).collect();
                let s: f32 = exps.iter().sum();
                for (slot, e) in row.iter_mut().zip(&exps) {
                    *slot = e / s;
                }
            } else {
                row[PAD as usize] = 1.0;
            }
        }
    }
    let fake64 = to64(&fake_rows);
    let fake_t = Tensor::new(vec![2, MAX_LEN, VOCAB], fake_rows).unwrap();
    let real_ids: Vec<u32> = real.iter().flat_map(|s| s.ids.iter().copied()).collect();
    let real_onehot64: Vec<f64> = {
        let oh = one_hot_rows(&real_ids, VOCAB);
        to64(oh.data())
    };

    let inputs: Vec<Tensor> = disc
        .named_params()
        .iter()
        .map(|(_, t)| (*t).clone())
        .collect();
    let real2 = real.clone();

    super::check_instance_verbose(
        &inputs,
        |g, ids| {
            let bound = disc_bound_from(ids);
            let fake_c = g.constant(fake_t.clone());
            let fake_scores = disc.score_dist_batch(g, &bound, fake_c).unwrap();
            let real_scores = disc.score_tokens_batch(g, &bound, &real2).unwrap();
            let (loss, _, _) = loss_discriminator(g, real_scores, fake_scores).unwrap();
            loss
        },
        move |bufs| {
            let d = DiscOracle::from_buffers(bufs, &dims);
            let mut sum_real = 0.0f64;
            let mut sum_fake = 0.0f64;
            for bi in 0..2 {
                let real_slice =
                    &real_onehot64[bi * MAX_LEN * VOCAB..(bi + 1) * MAX_LEN * VOCAB];
                sum_real += clamp64(d.score(real_slice)).ln();
                let fake_slice = &fake64[bi * MAX_LEN * VOCAB..(bi + 1) * MAX_LEN * VOCAB];
                sum_fake += clamp64(1.0 - d.score(fake_slice)).ln();
            }
            -(sum_real / 2.0 + sum_fake / 2.0)
        },
        COMPOSITE_EPS,
        per,
    )
}

/// The three end-to-end checks, `instances` random instances each.
pub fn check_composites(seed: u64, instances: usize) -> Vec<OpReport> {
    let make = |name: &'static str, f: &dyn Fn(&mut Rng) -> f64| {
        let mut worst = 0.0f64;
        for k in 0..instances {
            let mut rng = Rng::new(seed ^ (0xabcd_0001 + k as u64 * 0x77));
            worst = worst.max(f(&mut rng));
        }
        OpReport {
            name,
            instances,
            max_rel_err: worst,
            tolerance: COMPOSITE_TOLERANCE,
            passed: worst < COMPOSITE_TOLERANCE,
        }
    };
    vec![
        make("L_G composite (lstm)", &lstm_instance),
        make("L_G composite (transformer)", &transformer_instance),
        make("discriminator loss composite", &discriminator_instance),
    ]
}
