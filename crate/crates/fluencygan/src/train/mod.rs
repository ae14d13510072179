//! Losses, optimizers, the pretraining and adversarial loops, and
//! checkpointing.
//!
//! Training follows the RelGAN-style recipe: the generator is first
//! pretrained as an autoencoder on awkward sentences (cross-entropy only),
//! then generator and discriminator alternate, with two generator epochs per
//! discriminator epoch. The generator minimizes
//! `L_G = L_AE - lambda * L_DG` where `L_DG = log D(G(s))` is the
//! non-saturating adversarial term; the discriminator maximizes
//! `log D(x) + log(1 - D(G(s)))`, implemented as the bounded
//! binary-cross-entropy loss.

pub mod adam;
pub mod checkpoint;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discriminator::{accuracy_from_scores, DiscriminatorParams};
use crate::generator::{GeneratorKind, GeneratorModel};
use crate::rng::Rng;
use crate::tensor::{Graph, NodeId, Tensor, TensorError};
use crate::text::batch::{make_batches, Batch};
use crate::text::{TextError, TokenSequence, PAD};
use adam::{clip_global_norm, transformer_lr, Adam};
use checkpoint::CheckpointError;

/// Scores are clamped to [CLAMP, 1 - CLAMP] before any log.
pub const SCORE_CLAMP: f32 = 1e-7;
/// Global-norm gradient clip for the LSTM path.
pub const LSTM_CLIP_NORM: f32 = 5.0;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(
        "numeric abort: {loss} became non-finite (phase {phase}, round {round}, epoch {epoch}, step {step})"
    )]
    NumericAbort {
        loss: &'static str,
        phase: &'static str,
        round: u32,
        epoch: u32,
        step: usize,
    },
    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Every training hyperparameter. `lambda` trades fidelity (low) against
/// fluency pressure (high); `tau` is the Gumbel-softmax temperature, with an
/// optional geometric anneal down to `tau_anneal_floor` across adversarial
/// rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub lambda: f32,
    pub tau: f32,
    pub tau_anneal_floor: Option<f32>,
    pub pretrain_epochs: u32,
    pub gen_epochs_per_disc_epoch: u32,
    pub adversarial_rounds: u32,
    pub batch_size: usize,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    pub warmup_steps: u32,
    pub base_lr: f32,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda: 0.1,
            tau: 1.0,
            tau_anneal_floor: None,
            pretrain_epochs: 20,
            gen_epochs_per_disc_epoch: 2,
            adversarial_rounds: 10,
            batch_size: 32,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            warmup_steps: 400,
            base_lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(TrainError::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.tau > 0.0) {
            return Err(TrainError::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if let Some(floor) = self.tau_anneal_floor {
            if !(floor > 0.0) || floor > self.tau {
                return Err(TrainError::Config(format!(
                    "tau anneal floor must be in (0, tau], got {floor}"
                )));
            }
        }
        if self.gen_epochs_per_disc_epoch < 1 {
            return Err(TrainError::Config(
                "gen_epochs_per_disc_epoch must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Aligned (awkward, fluent) sentence pairs, already encoded.
#[derive(Debug, Clone)]
pub struct PairedCorpus {
    pub awkward: Vec<TokenSequence>,
    pub fluent: Vec<TokenSequence>,
}

impl PairedCorpus {
    pub fn new(awkward: Vec<TokenSequence>, fluent: Vec<TokenSequence>) -> Result<Self> {
        if awkward.len() != fluent.len() {
            return Err(TrainError::Text(TextError::Invalid(format!(
                "awkward/fluent corpora must align: {} vs {}",
                awkward.len(),
                fluent.len()
            ))));
        }
        if awkward.is_empty() {
            return Err(TrainError::Text(TextError::EmptyCorpus(
                "no training pairs".into(),
            )));
        }
        Ok(PairedCorpus { awkward, fluent })
    }

    pub fn len(&self) -> usize {
        self.awkward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.awkward.is_empty()
    }
}

// ---- losses ----

/// Mean cross-entropy over non-PAD target positions; logits are [B, L, V].
pub fn loss_ae(g: &mut Graph, logits: NodeId, targets: &[TokenSequence]) -> Result<NodeId> {
    let shape = g.shape(logits).to_vec();
    let (b, l, v) = (shape[0], shape[1], shape[2]);
    let flat = g.reshape(logits, vec![b * l, v])?;
    let ids: Vec<u32> = targets.iter().flat_map(|s| s.ids.iter().copied()).collect();
    let mask: Vec<f32> = ids
        .iter()
        .map(|&id| if id == PAD { 0.0 } else { 1.0 })
        .collect();
    Ok(g.cross_entropy_rows(flat, &ids, &mask)?)
}

/// Mean over the batch of log D(G(s)), scores clamped away from {0, 1}.
pub fn loss_dg(g: &mut Graph, d_scores: NodeId) -> Result<NodeId> {
    let c = g.clamp(d_scores, SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let lg = g.log(c);
    Ok(g.mean(lg, None)?)
}

/// Mean over the batch of log D(x) for real sentences.
pub fn loss_df(g: &mut Graph, d_scores: NodeId) -> Result<NodeId> {
    loss_dg(g, d_scores)
}

/// L_G = L_AE - lambda * L_DG. With lambda = 0 this reproduces L_AE exactly.
pub fn loss_generator(g: &mut Graph, l_ae: NodeId, l_dg: NodeId, lambda: f32) -> Result<NodeId> {
    let scaled = g.scale(l_dg, lambda);
    Ok(g.sub(l_ae, scaled)?)
}

/// Discriminator loss -[mean log D(x) + mean log(1 - D(G(s)))], the bounded
/// binary-cross-entropy form. Also returns the logged objective values
/// (L_DF, L_DG).
pub fn loss_discriminator(
    g: &mut Graph,
    d_real: NodeId,
    d_fake: NodeId,
) -> Result<(NodeId, NodeId, NodeId)> {
    let l_df = loss_df(g, d_real)?;
    let l_dg = loss_dg(g, d_fake)?;
    let one = g.constant_scalar(1.0);
    let flipped = g.sub(one, d_fake)?;
    let c = g.clamp(flipped, SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let lg = g.log(c);
    let mean_flipped = g.mean(lg, None)?;
    let sum = g.add(l_df, mean_flipped)?;
    let loss = g.neg(sum);
    Ok((loss, l_df, l_dg))
}

/// Replace Gumbel rows past each sentence's EOS with exact one-hot PAD rows
/// so generated and real sequences share the same tail structure and the
/// discriminator cannot separate them on tail garbage alone.
pub fn pad_tail_override(
    g: &mut Graph,
    soft: NodeId,
    seqs: &[TokenSequence],
) -> Result<NodeId> {
    let shape = g.shape(soft).to_vec();
    let (b, l, v) = (shape[0], shape[1], shape[2]);
    let mut content = vec![0.0f32; b * l];
    let mut pad_rows = vec![0.0f32; b * l * v];
    for (bi, seq) in seqs.iter().enumerate() {
        let n = seq.content_len();
        for t in 0..l {
            if t < n {
                content[bi * l + t] = 1.0;
            } else {
                pad_rows[(bi * l + t) * v + PAD as usize] = 1.0;
            }
        }
    }
    let content = g.constant(Tensor::new(vec![b, l, 1], content)?);
    let pad_rows = g.constant(Tensor::new(vec![b, l, v], pad_rows)?);
    let kept = g.mul(soft, content)?;
    Ok(g.add(kept, pad_rows)?)
}

/// Scalar reference forms of the same losses.
pub fn loss_dg_value(d_score: f32) -> f32 {
    d_score.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP).ln()
}

pub fn loss_df_value(d_score: f32) -> f32 {
    loss_dg_value(d_score)
}

pub fn loss_generator_value(l_ae: f32, l_dg: f32, lambda: f32) -> f32 {
    l_ae - lambda * l_dg
}

pub fn loss_discriminator_value(d_real: f32, d_fake: f32) -> f32 {
    -(loss_df_value(d_real) + (1.0 - d_fake).clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP).ln())
}

// ---- training log ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: String, // "pretrain" | "disc" | "gen"
    pub round: u32,
    pub epoch: u32,
    pub loss_ae: Option<f64>,
    pub loss_dg: Option<f64>,
    pub loss_df: Option<f64>,
    pub disc_acc: Option<f64>,
    pub lr: f64,
    pub wall_ms: u64,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("epoch log serializes")
    }
}

// ---- trainer ----

/// Owns both models, their optimizer states, and the run RNG. All stochastic
/// choices (shuffling, Gumbel noise, dropout) draw from the one seeded
/// stream, so a saved (parameters, optimizer, RNG) triple resumes a run
/// exactly.
pub struct Trainer {
    pub generator: GeneratorModel,
    pub discriminator: DiscriminatorParams,
    pub vocab: crate::text::Vocabulary,
    pub config: TrainingConfig,
    pub(crate) adam_gen: Adam,
    pub(crate) adam_disc: Adam,
    pub(crate) rng: Rng,
    last_gen_lr: f64,
}

impl Trainer {
    pub fn new(
        generator: GeneratorModel,
        discriminator: DiscriminatorParams,
        vocab: crate::text::Vocabulary,
        config: TrainingConfig,
    ) -> Result<Self> {
        config.validate()?;
        let gen_sizes: Vec<usize> = generator
            .named_params()
            .iter()
            .map(|(_, t)| t.numel())
            .collect();
        let disc_sizes: Vec<usize> = discriminator
            .named_params()
            .iter()
            .map(|(_, t)| t.numel())
            .collect();
        let adam_gen = Adam::new(
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
            &gen_sizes,
        );
        let adam_disc = Adam::new(
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
            &disc_sizes,
        );
        let rng = Rng::new(config.seed);
        let base_lr = config.base_lr as f64;
        Ok(Trainer {
            generator,
            discriminator,
            vocab,
            config,
            adam_gen,
            adam_disc,
            rng,
            last_gen_lr: base_lr,
        })
    }

    pub(crate) fn from_parts(
        generator: GeneratorModel,
        discriminator: DiscriminatorParams,
        vocab: crate::text::Vocabulary,
        config: TrainingConfig,
        adam_gen: Adam,
        adam_disc: Adam,
        rng: Rng,
    ) -> Self {
        let base_lr = config.base_lr as f64;
        Trainer {
            generator,
            discriminator,
            vocab,
            config,
            adam_gen,
            adam_disc,
            rng,
            last_gen_lr: base_lr,
        }
    }

    fn gen_lr(&self) -> f32 {
        match self.generator.kind() {
            GeneratorKind::Lstm => self.config.base_lr,
            GeneratorKind::Transformer => transformer_lr(
                self.adam_gen.step + 1,
                self.generator.hidden_size(),
                self.config.warmup_steps,
            ),
        }
    }

    /// Gumbel temperature for a given adversarial round (1-based), following
    /// the optional geometric anneal from `tau` down to the floor.
    pub fn tau_for_round(&self, round: u32, total_rounds: u32) -> f32 {
        match self.config.tau_anneal_floor {
            Some(floor) if total_rounds > 1 => {
                let frac = (round - 1) as f32 / (total_rounds - 1) as f32;
                self.config.tau * (floor / self.config.tau).powf(frac)
            }
            _ => self.config.tau,
        }
    }

    fn apply_gen_grads(&mut self, mut grads: Vec<Option<Vec<f32>>>) {
        if self.generator.kind() == GeneratorKind::Lstm {
            clip_global_norm(&mut grads, LSTM_CLIP_NORM);
        }
        let lr = self.gen_lr();
        self.last_gen_lr = lr as f64;
        let mut params = self.generator.named_params_mut();
        self.adam_gen.step(&mut params, &grads, lr);
    }

    fn pretrain_step(&mut self, batch: &Batch) -> Result<f32> {
        let mut g = Graph::new();
        let fwd = self.generator.forward_teacher(
            &mut g,
            &batch.awkward,
            &batch.awkward,
            None,
            0,
            false,
            Some(&mut self.rng),
        )?;
        let loss = loss_ae(&mut g, fwd.logits, &batch.awkward)?;
        let value = g.data(loss)[0];
        if !value.is_finite() {
            return Ok(value); // caller raises the numeric abort with context
        }
        g.backward(loss)?;
        let grads: Vec<Option<Vec<f32>>> = fwd
            .bound
            .iter()
            .map(|id| g.grad_of(*id).map(|s| s.to_vec()))
            .collect();
        drop(g);
        self.apply_gen_grads(grads);
        Ok(value)
    }

    /// Autoencoder pretraining: reconstruct each awkward sentence from
    /// itself, minimizing cross-entropy only. One log row per epoch.
    pub fn pretrain(&mut self, corpus: &PairedCorpus, epochs: u32) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::with_capacity(epochs as usize);
        for epoch in 1..=epochs {
            let started = Instant::now();
            let shuffle = self.rng.next_u64();
            let batches = make_batches(
                &corpus.awkward,
                &corpus.fluent,
                self.config.batch_size,
                shuffle,
            )?;
            let mut total = 0.0f64;
            for (step, batch) in batches.iter().enumerate() {
                let value = self.pretrain_step(batch)?;
                if !value.is_finite() {
                    return Err(TrainError::NumericAbort {
                        loss: "loss_ae",
                        phase: "pretrain",
                        round: 0,
                        epoch,
                        step,
                    });
                }
                total += value as f64;
            }
            logs.push(EpochLog {
                phase: "pretrain".into(),
                round: 0,
                epoch,
                loss_ae: Some(total / batches.len() as f64),
                loss_dg: None,
                loss_df: None,
                disc_acc: None,
                lr: self.last_gen_lr,
                wall_ms: started.elapsed().as_millis() as u64,
            });
        }
        Ok(logs)
    }

    fn disc_epoch(
        &mut self,
        corpus: &PairedCorpus,
        round: u32,
        epoch: u32,
        tau: f32,
    ) -> Result<EpochLog> {
        let started = Instant::now();
        let shuffle = self.rng.next_u64();
        let batches = make_batches(
            &corpus.awkward,
            &corpus.fluent,
            self.config.batch_size,
            shuffle,
        )?;
        let (mut sum_df, mut sum_dg) = (0.0f64, 0.0f64);
        let mut correct = 0.0f64;
        let mut seen = 0usize;
        for (step, batch) in batches.iter().enumerate() {
            let noise_seed = self.rng.next_u64();
            let mut g = Graph::new();
            let fwd = self.generator.forward_teacher(
                &mut g,
                &batch.awkward,
                &batch.awkward,
                Some(tau),
                noise_seed,
                true,
                None,
            )?;
            let soft = fwd.soft.expect("temperature given");
            let d_input = pad_tail_override(&mut g, soft, &batch.awkward)?;
            let dbound = self.discriminator.bind(&mut g, false);
            let fake = self.discriminator.score_dist_batch(&mut g, &dbound, d_input)?;
            let real = self
                .discriminator
                .score_tokens_batch(&mut g, &dbound, &batch.fluent)?;
            let (loss, l_df, l_dg) = loss_discriminator(&mut g, real, fake)?;
            let loss_value = g.data(loss)[0];
            if !loss_value.is_finite() {
                return Err(TrainError::NumericAbort {
                    loss: "loss_discriminator",
                    phase: "disc",
                    round,
                    epoch,
                    step,
                });
            }
            sum_df += g.data(l_df)[0] as f64;
            sum_dg += g.data(l_dg)[0] as f64;
            correct +=
                accuracy_from_scores(g.data(real), g.data(fake), 0.5) as f64 * batch.len() as f64;
            seen += batch.len();

            g.backward(loss)?;
            let grads: Vec<Option<Vec<f32>>> = dbound
                .ordered()
                .iter()
                .map(|id| g.grad_of(*id).map(|s| s.to_vec()))
                .collect();
            drop(g);
            let mut params = self.discriminator.named_params_mut();
            self.adam_disc.step(&mut params, &grads, self.config.base_lr);
        }
        let n = batches.len() as f64;
        Ok(EpochLog {
            phase: "disc".into(),
            round,
            epoch,
            loss_ae: None,
            loss_dg: Some(sum_dg / n),
            loss_df: Some(sum_df / n),
            disc_acc: Some(correct / seen as f64),
            lr: self.config.base_lr as f64,
            wall_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn gen_epoch(
        &mut self,
        corpus: &PairedCorpus,
        round: u32,
        epoch: u32,
        tau: f32,
    ) -> Result<EpochLog> {
        let started = Instant::now();
        let shuffle = self.rng.next_u64();
        let batches = make_batches(
            &corpus.awkward,
            &corpus.fluent,
            self.config.batch_size,
            shuffle,
        )?;
        let (mut sum_ae, mut sum_dg) = (0.0f64, 0.0f64);
        for (step, batch) in batches.iter().enumerate() {
            let noise_seed = self.rng.next_u64();
            let mut g = Graph::new();
            let fwd = self.generator.forward_teacher(
                &mut g,
                &batch.awkward,
                &batch.awkward,
                Some(tau),
                noise_seed,
                false,
                Some(&mut self.rng),
            )?;
            let soft = fwd.soft.expect("temperature given");
            let l_ae = loss_ae(&mut g, fwd.logits, &batch.awkward)?;
            let d_input = pad_tail_override(&mut g, soft, &batch.awkward)?;
            let dbound = self.discriminator.bind(&mut g, true);
            let fake = self.discriminator.score_dist_batch(&mut g, &dbound, d_input)?;
            let l_dg = loss_dg(&mut g, fake)?;
            let l_g = loss_generator(&mut g, l_ae, l_dg, self.config.lambda)?;

            for (name, node) in [("loss_ae", l_ae), ("loss_dg", l_dg), ("loss_generator", l_g)] {
                if !g.data(node)[0].is_finite() {
                    return Err(TrainError::NumericAbort {
                        loss: name,
                        phase: "gen",
                        round,
                        epoch,
                        step,
                    });
                }
            }
            sum_ae += g.data(l_ae)[0] as f64;
            sum_dg += g.data(l_dg)[0] as f64;

            g.backward(l_g)?;
            let grads: Vec<Option<Vec<f32>>> = fwd
                .bound
                .iter()
                .map(|id| g.grad_of(*id).map(|s| s.to_vec()))
                .collect();
            drop(g);
            self.apply_gen_grads(grads);
        }
        let n = batches.len() as f64;
        Ok(EpochLog {
            phase: "gen".into(),
            round,
            epoch,
            loss_ae: Some(sum_ae / n),
            loss_dg: Some(sum_dg / n),
            loss_df: None,
            disc_acc: None,
            lr: self.last_gen_lr,
            wall_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// The alternating loop: per round, one discriminator epoch then
    /// `gen_epochs_per_disc_epoch` generator epochs. Requires a pretrained
    /// generator for sensible results but does not enforce it.
    pub fn adversarial_train(
        &mut self,
        corpus: &PairedCorpus,
        rounds: u32,
    ) -> Result<Vec<EpochLog>> {
        self.adversarial_train_with_hook(corpus, rounds, |_, _| Ok(()))
    }

    /// As `adversarial_train`, calling `after_round(self, round)` at every
    /// round boundary (the CLI checkpoints there).
    pub fn adversarial_train_with_hook(
        &mut self,
        corpus: &PairedCorpus,
        rounds: u32,
        mut after_round: impl FnMut(&Trainer, u32) -> Result<()>,
    ) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        let mut gen_epoch_counter = 0u32;
        for round in 1..=rounds {
            let tau = self.tau_for_round(round, rounds);
            logs.push(self.disc_epoch(corpus, round, round, tau)?);
            for _ in 0..self.config.gen_epochs_per_disc_epoch {
                gen_epoch_counter += 1;
                logs.push(self.gen_epoch(corpus, round, gen_epoch_counter, tau)?);
            }
            after_round(self, round)?;
        }
        Ok(logs)
    }

    /// Teacher-forced token reconstruction accuracy over the corpus, scored
    /// on positions after the forced BOS (content and EOS), PAD excluded.
    pub fn token_accuracy(&self, corpus: &PairedCorpus) -> Result<f32> {
        let v = self.generator.vocab_size();
        let mut correct = 0usize;
        let mut total = 0usize;
        for chunk in corpus.awkward.chunks(self.config.batch_size.max(1)) {
            let mut g = Graph::new();
            let fwd = self
                .generator
                .forward_teacher(&mut g, chunk, chunk, None, 0, true, None)?;
            let logits = g.data(fwd.logits);
            let l = self.generator.max_len();
            for (bi, seq) in chunk.iter().enumerate() {
                for t in 1..seq.content_len() {
                    let row = &logits[(bi * l + t) * v..(bi * l + t + 1) * v];
                    if crate::lstm::argmax(row) as u32 == seq.ids[t] {
                        correct += 1;
                    }
                    total += 1;
                }
            }
        }
        Ok(correct as f32 / total.max(1) as f32)
    }
}

/// Greedy-decode the inputs and measure copying: the fraction of exact
/// content copies, and the mean positional token overlap (matched positions
/// over the longer content length).
pub fn copy_stats(generator: &GeneratorModel, inputs: &[TokenSequence]) -> (f64, f64) {
    let mut exact = 0usize;
    let mut overlap_sum = 0.0f64;
    for chunk in inputs.chunks(32) {
        let outs = generator.decode_greedy_batch(chunk);
        for (inp, out) in chunk.iter().zip(&outs) {
            let a = inp.content_ids();
            let b = out.content_ids();
            if a == b {
                exact += 1;
            }
            let denom = a.len().max(b.len());
            if denom == 0 {
                overlap_sum += 1.0;
            } else {
                let matched = a.iter().zip(&b).filter(|(x, y)| x == y).count();
                overlap_sum += matched as f64 / denom as f64;
            }
        }
    }
    let n = inputs.len() as f64;
    (exact as f64 / n, overlap_sum / n)
}
