//! Adversarial fluency improvement for awkward English sentences.
//!
//! Two sequence-to-sequence generators (an attention LSTM and a small
//! transformer) learn to rewrite disfluent English into fluent English by
//! playing a GAN game against a 1D-CNN discriminator. Discrete sampling is
//! made differentiable with a Gumbel-softmax head, so discriminator gradients
//! flow back into the generator. Training balances a reconstruction loss
//! against the adversarial term through a `lambda` weight, which controls the
//! copy-vs-rewrite trade-off.
//!
//! The crate is self-contained: it ships its own reverse-mode autodiff engine
//! ([`tensor`]), tokenization and synthetic data tooling ([`text`]), both
//! generators ([`lstm`], [`transformer`]), the discriminator
//! ([`discriminator`]), the training loop with checkpointing ([`train`]),
//! BLEU / embedding-similarity evaluation ([`eval`]), and a finite-difference
//! verification suite ([`gradcheck`]).
//!
//! Start with the runnable examples (`cargo run --example <name>`) or the
//! `fluencygan` binary (`corrupt`, `pretrain`, `train`, `infer`, `eval`,
//! `gradcheck` subcommands).



pub mod cli;
pub mod discriminator;
pub mod eval;
pub mod generator;
pub mod gradcheck;
pub mod lstm;
pub mod rng;
pub mod tensor;
pub mod text;
pub mod train;
pub mod transformer;

pub use generator::{GeneratorKind, GeneratorModel};
pub use tensor::{Graph, NodeId, Tensor, TensorError};
pub use text::{TokenSequence, Vocabulary};
pub use train::{Trainer, TrainingConfig};
