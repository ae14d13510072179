//! Binary checkpoint format.
//!
//! Layout: magic `FLGN`, u32 version, u32 entry count; per entry a u16 name
//! length, the UTF-8 name, a u8 rank, u32 dims, and the raw little-endian
//! f32 payload. After the entries comes a UTF-8 `key=value` config block,
//! and the final 32 bytes are the RNG state (4 x u64, little-endian).
//!
//! Entries hold every model parameter (`gen.*`, `disc.*`) plus the Adam
//! moment buffers (`opt.gen.*`, `opt.disc.*`), so loading a checkpoint
//! resumes training exactly where it stopped. Saving is canonical: the same
//! state always produces byte-identical files.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::discriminator::{DiscriminatorDims, DiscriminatorParams};
use crate::generator::{GeneratorKind, GeneratorModel};
use crate::lstm::LstmDims;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::text::Vocabulary;
use crate::train::adam::Adam;
use crate::train::{Trainer, TrainingConfig};
use crate::transformer::TransformerDims;

pub const MAGIC: [u8; 4] = *b"FLGN";
pub const VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn fmt_f32(v: f32) -> String {
    // Rust's shortest round-trip float formatting; parses back bit-exactly.
    format!("{v}")
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    fn entry(&mut self, name: &str, shape: &[usize], data: &[f32]) {
        self.u16(name.len() as u16);
        self.bytes(name.as_bytes());
        self.buf.push(shape.len() as u8);
        for &d in shape {
            self.u32(d as u32);
        }
        for &v in data {
            self.bytes(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Format(format!(
                "truncated file: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn collect_entries(trainer: &Trainer) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut entries = Vec::new();
    for (name, t) in trainer.generator.named_params() {
        entries.push((format!("gen.{name}"), t.shape().to_vec(), t.data().to_vec()));
    }
    for (name, t) in trainer.discriminator.named_params() {
        entries.push((format!("disc.{name}"), t.shape().to_vec(), t.data().to_vec()));
    }
    for ((name, t), (m, v)) in trainer
        .generator
        .named_params()
        .iter()
        .zip(trainer.adam_gen.m.iter().zip(&trainer.adam_gen.v))
    {
        entries.push((format!("opt.gen.{name}.m"), t.shape().to_vec(), m.clone()));
        entries.push((format!("opt.gen.{name}.v"), t.shape().to_vec(), v.clone()));
    }
    for ((name, t), (m, v)) in trainer
        .discriminator
        .named_params()
        .iter()
        .zip(trainer.adam_disc.m.iter().zip(&trainer.adam_disc.v))
    {
        entries.push((format!("opt.disc.{name}.m"), t.shape().to_vec(), m.clone()));
        entries.push((format!("opt.disc.{name}.v"), t.shape().to_vec(), v.clone()));
    }
    entries
}

fn config_block(trainer: &Trainer) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    let c = &trainer.config;
    kv("generator", trainer.generator.kind().name().to_string());
    kv("vocab_size", trainer.generator.vocab_size().to_string());
    kv("max_len", trainer.generator.max_len().to_string());
    match &trainer.generator {
        GeneratorModel::Lstm(p) => {
            kv("lstm.embed", p.dims.embed.to_string());
            kv("lstm.hidden", p.dims.hidden.to_string());
        }
        GeneratorModel::Transformer(p) => {
            kv("tf.model", p.dims.model.to_string());
            kv("tf.heads", p.dims.heads.to_string());
            kv("tf.ff", p.dims.ff.to_string());
            kv("tf.enc_layers", p.dims.enc_layers.to_string());
            kv("tf.dec_layers", p.dims.dec_layers.to_string());
            kv("tf.dropout", fmt_f32(p.dims.dropout));
        }
    }
    kv("disc.embed", trainer.discriminator.dims.embed.to_string());
    kv("disc.dense", trainer.discriminator.dims.dense.to_string());
    kv("lambda", fmt_f32(c.lambda));
    kv("tau", fmt_f32(c.tau));
    kv(
        "tau_anneal_floor",
        c.tau_anneal_floor.map_or("none".to_string(), fmt_f32),
    );
    kv("pretrain_epochs", c.pretrain_epochs.to_string());
    kv(
        "gen_epochs_per_disc_epoch",
        c.gen_epochs_per_disc_epoch.to_string(),
    );
    kv("adversarial_rounds", c.adversarial_rounds.to_string());
    kv("batch_size", c.batch_size.to_string());
    kv("adam_beta1", fmt_f32(c.adam_beta1));
    kv("adam_beta2", fmt_f32(c.adam_beta2));
    kv("adam_eps", fmt_f32(c.adam_eps));
    kv("warmup_steps", c.warmup_steps.to_string());
    kv("base_lr", fmt_f32(c.base_lr));
    kv("seed", c.seed.to_string());
    kv("opt.gen.step", trainer.adam_gen.step.to_string());
    kv("opt.disc.step", trainer.adam_disc.step.to_string());
    for (offset, token) in trainer.vocab.regular_tokens().iter().enumerate() {
        kv(&format!("vocab.{}", offset + crate::text::NUM_SPECIALS), token.clone());
    }
    out
}

/// Serialize the full trainer state (models, optimizers, config, vocabulary,
/// RNG) to one file.
pub fn save(path: &Path, trainer: &Trainer) -> Result<()> {
    let entries = collect_entries(trainer);
    let mut w = Writer::new();
    w.bytes(&MAGIC);
    w.u32(VERSION);
    w.u32(entries.len() as u32);
    for (name, shape, data) in &entries {
        w.entry(name, shape, data);
    }
    w.bytes(config_block(trainer).as_bytes());
    for word in trainer.rng.state() {
        w.u64(word);
    }
    std::fs::write(path, &w.buf).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_config(text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CheckpointError::Format(format!("bad config line `{line}`"))
        })?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn want<'m>(map: &'m HashMap<String, String>, key: &str) -> Result<&'m str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| CheckpointError::Format(format!("missing config key `{key}`")))
}

fn parse<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> Result<T> {
    want(map, key)?
        .parse()
        .map_err(|_| CheckpointError::Format(format!("bad value for `{key}`")))
}

fn fill_params(
    prefix: &str,
    params: &mut [(String, &mut Tensor)],
    entries: &HashMap<String, (Vec<usize>, Vec<f32>)>,
) -> Result<()> {
    for (name, t) in params.iter_mut() {
        let key = format!("{prefix}.{name}");
        let (shape, data) = entries
            .get(&key)
            .ok_or_else(|| CheckpointError::Format(format!("missing tensor `{key}`")))?;
        if shape != t.shape() {
            return Err(CheckpointError::Format(format!(
                "tensor `{key}` has shape {shape:?}, expected {:?}",
                t.shape()
            )));
        }
        t.data_mut().copy_from_slice(data);
    }
    Ok(())
}

fn fill_adam(
    prefix: &str,
    names: &[String],
    adam: &mut Adam,
    entries: &HashMap<String, (Vec<usize>, Vec<f32>)>,
) -> Result<()> {
    for (i, name) in names.iter().enumerate() {
        for (suffix, slot) in [("m", &mut adam.m[i]), ("v", &mut adam.v[i])] {
            let key = format!("{prefix}.{name}.{suffix}");
            let (_, data) = entries
                .get(&key)
                .ok_or_else(|| CheckpointError::Format(format!("missing tensor `{key}`")))?;
            if data.len() != slot.len() {
                return Err(CheckpointError::Format(format!(
                    "optimizer buffer `{key}` has {} values, expected {}",
                    data.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(data);
        }
    }
    Ok(())
}

/// Load a trainer (models + optimizer state + config + vocabulary + RNG).
pub fn load(path: &Path) -> Result<Trainer> {
    let buf = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = Reader::new(&buf);
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Format("bad magic (not FLGN)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries: HashMap<String, (Vec<usize>, Vec<f32>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Format("entry name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.insert(name, (shape, data));
    }

    if buf.len() < r.pos + 32 {
        return Err(CheckpointError::Format(
            "truncated file: missing RNG state".into(),
        ));
    }
    let config_text = std::str::from_utf8(&buf[r.pos..buf.len() - 32])
        .map_err(|_| CheckpointError::Format("config block is not UTF-8".into()))?;
    let map = parse_config(config_text)?;
    let mut rng_state = [0u64; 4];
    for (i, chunk) in buf[buf.len() - 32..].chunks_exact(8).enumerate() {
        rng_state[i] = u64::from_le_bytes(chunk.try_into().unwrap());
    }

    // Vocabulary: contiguous ids starting after the specials.
    let vocab_size: usize = parse(&map, "vocab_size")?;
    let mut tokens = Vec::with_capacity(vocab_size - crate::text::NUM_SPECIALS);
    for id in crate::text::NUM_SPECIALS..vocab_size {
        tokens.push(want(&map, &format!("vocab.{id}"))?.to_string());
    }
    let vocab = Vocabulary::from_tokens(tokens);

    let config = TrainingConfig {
        lambda: parse(&map, "lambda")?,
        tau: parse(&map, "tau")?,
        tau_anneal_floor: match want(&map, "tau_anneal_floor")? {
            "none" => None,
            v => Some(v.parse().map_err(|_| {
                CheckpointError::Format("bad value for `tau_anneal_floor`".into())
            })?),
        },
        pretrain_epochs: parse(&map, "pretrain_epochs")?,
        gen_epochs_per_disc_epoch: parse(&map, "gen_epochs_per_disc_epoch")?,
        adversarial_rounds: parse(&map, "adversarial_rounds")?,
        batch_size: parse(&map, "batch_size")?,
        adam_beta1: parse(&map, "adam_beta1")?,
        adam_beta2: parse(&map, "adam_beta2")?,
        adam_eps: parse(&map, "adam_eps")?,
        warmup_steps: parse(&map, "warmup_steps")?,
        base_lr: parse(&map, "base_lr")?,
        seed: parse(&map, "seed")?,
    };

    let max_len: usize = parse(&map, "max_len")?;
    let kind = GeneratorKind::parse(want(&map, "generator")?)
        .ok_or_else(|| CheckpointError::Format("unknown generator kind".into()))?;
    let mut generator = match kind {
        GeneratorKind::Lstm => GeneratorModel::new_lstm(
            LstmDims {
                vocab: vocab_size,
                embed: parse(&map, "lstm.embed")?,
                hidden: parse(&map, "lstm.hidden")?,
                max_len,
            },
            0,
        ),
        GeneratorKind::Transformer => GeneratorModel::new_transformer(
            TransformerDims {
                vocab: vocab_size,
                model: parse(&map, "tf.model")?,
                heads: parse(&map, "tf.heads")?,
                ff: parse(&map, "tf.ff")?,
                enc_layers: parse(&map, "tf.enc_layers")?,
                dec_layers: parse(&map, "tf.dec_layers")?,
                max_len,
                dropout: parse(&map, "tf.dropout")?,
            },
            0,
        ),
    };
    let mut discriminator = DiscriminatorParams::new(
        DiscriminatorDims {
            vocab: vocab_size,
            embed: parse(&map, "disc.embed")?,
            dense: parse(&map, "disc.dense")?,
            max_len,
        },
        0,
    );

    fill_params("gen", &mut generator.named_params_mut(), &entries)?;
    fill_params("disc", &mut discriminator.named_params_mut(), &entries)?;

    let gen_names: Vec<String> = generator
        .named_params()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let gen_sizes: Vec<usize> = generator
        .named_params()
        .iter()
        .map(|(_, t)| t.numel())
        .collect();
    let disc_names: Vec<String> = discriminator
        .named_params()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let disc_sizes: Vec<usize> = discriminator
        .named_params()
        .iter()
        .map(|(_, t)| t.numel())
        .collect();
    let mut adam_gen = Adam::new(config.adam_beta1, config.adam_beta2, config.adam_eps, &gen_sizes);
    let mut adam_disc = Adam::new(
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
        &disc_sizes,
    );
    adam_gen.step = parse(&map, "opt.gen.step")?;
    adam_disc.step = parse(&map, "opt.disc.step")?;
    fill_adam("opt.gen", &gen_names, &mut adam_gen, &entries)?;
    fill_adam("opt.disc", &disc_names, &mut adam_disc, &entries)?;

    Ok(Trainer::from_parts(
        generator,
        discriminator,
        vocab,
        config,
        adam_gen,
        adam_disc,
        Rng::from_state(rng_state),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{encode, synth, tokenize};
    use crate::train::PairedCorpus;

    fn small_trainer(kind: GeneratorKind) -> (Trainer, PairedCorpus) {
        let lines = synth::fluent_corpus(16, 9);
        let tokens: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l)).collect();
        let vocab = Vocabulary::build(&tokens, 128).unwrap();
        let max_len = 18;
        let fluent: Vec<_> = tokens.iter().map(|t| encode(t, &vocab, max_len)).collect();
        let awkward = fluent.clone();
        let corpus = PairedCorpus::new(awkward, fluent).unwrap();
        let generator = match kind {
            GeneratorKind::Lstm => GeneratorModel::new_lstm(
                LstmDims {
                    vocab: vocab.size(),
                    embed: 8,
                    hidden: 12,
                    max_len,
                },
                1,
            ),
            GeneratorKind::Transformer => GeneratorModel::new_transformer(
                TransformerDims {
                    vocab: vocab.size(),
                    model: 16,
                    heads: 2,
                    ff: 32,
                    enc_layers: 1,
                    dec_layers: 1,
                    max_len,
                    dropout: 0.1,
                },
                1,
            ),
        };
        let disc = DiscriminatorParams::new(
            DiscriminatorDims {
                vocab: vocab.size(),
                embed: 8,
                dense: 16,
                max_len,
            },
            2,
        );
        let config = TrainingConfig {
            batch_size: 8,
            ..Default::default()
        };
        (
            Trainer::new(generator, disc, vocab, config).unwrap(),
            corpus,
        )
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fluencygan-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        for kind in [GeneratorKind::Lstm, GeneratorKind::Transformer] {
            let (mut trainer, corpus) = small_trainer(kind);
            trainer.pretrain(&corpus, 1).unwrap();
            let p1 = tmp(&format!("a-{}.flgn", kind.name()));
            let p2 = tmp(&format!("b-{}.flgn", kind.name()));
            save(&p1, &trainer).unwrap();
            let loaded = load(&p1).unwrap();
            save(&p2, &loaded).unwrap();
            let b1 = std::fs::read(&p1).unwrap();
            let b2 = std::fs::read(&p2).unwrap();
            assert_eq!(b1, b2, "{kind:?} round trip not byte-identical");
        }
    }

    #[test]
    fn load_restores_every_tensor_bit_exactly() {
        let (mut trainer, corpus) = small_trainer(GeneratorKind::Lstm);
        trainer.pretrain(&corpus, 1).unwrap();
        let p = tmp("exact.flgn");
        save(&p, &trainer).unwrap();
        let loaded = load(&p).unwrap();
        for ((n1, t1), (n2, t2)) in trainer
            .generator
            .named_params()
            .iter()
            .zip(loaded.generator.named_params())
        {
            assert_eq!(n1, &n2);
            assert_eq!(t1.data(), t2.data(), "tensor {n1} differs");
        }
        assert_eq!(trainer.rng.state(), loaded.rng.state());
        assert_eq!(trainer.adam_gen.step, loaded.adam_gen.step);
        assert_eq!(trainer.config, loaded.config);
        assert_eq!(trainer.vocab, loaded.vocab);
    }

    #[test]
    fn resume_equivalence_over_two_epochs() {
        // Uninterrupted: 2 pretrain epochs. Interrupted: 1 epoch, save, load,
        // 1 more epoch. Same losses, same parameters.
        let (mut solid, corpus) = small_trainer(GeneratorKind::Lstm);
        let solid_logs = solid.pretrain(&corpus, 2).unwrap();

        let (mut first, corpus2) = small_trainer(GeneratorKind::Lstm);
        let mut logs = first.pretrain(&corpus2, 1).unwrap();
        let p = tmp("resume.flgn");
        save(&p, &first).unwrap();
        let mut resumed = load(&p).unwrap();
        logs.extend(resumed.pretrain(&corpus2, 1).unwrap());

        let solid_losses: Vec<f64> = solid_logs.iter().map(|l| l.loss_ae.unwrap()).collect();
        let resumed_losses: Vec<f64> = logs.iter().map(|l| l.loss_ae.unwrap()).collect();
        assert_eq!(solid_losses, resumed_losses);
        for ((_, a), (_, b)) in solid
            .generator
            .named_params()
            .iter()
            .zip(resumed.generator.named_params())
        {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn truncated_and_corrupt_files_error_cleanly() {
        let (trainer, _) = small_trainer(GeneratorKind::Lstm);
        let p = tmp("trunc.flgn");
        save(&p, &trainer).unwrap();
        let full = std::fs::read(&p).unwrap();
        for cut in [0, 3, 10, full.len() / 2, full.len() - 7] {
            let t = tmp("cut.flgn");
            std::fs::write(&t, &full[..cut]).unwrap();
            match load(&t) {
                Err(CheckpointError::Format(_)) => {}
                Err(other) => panic!("cut at {cut}: expected format error, got {other}"),
                Ok(_) => panic!("cut at {cut}: load of a truncated file succeeded"),
            }
        }
        // Bad magic.
        let mut bad = full.clone();
        bad[0] = b'X';
        let t = tmp("badmagic.flgn");
        std::fs::write(&t, &bad).unwrap();
        assert!(matches!(load(&t), Err(CheckpointError::Format(_))));
    }
}
