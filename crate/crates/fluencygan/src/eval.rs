//! Evaluation metrics and report generation.
//!
//! Two BLEU variants ship side by side: `bleu_bow` is plain bag-of-words
//! precision (unique-token intersection over unique candidate tokens), and
//! `bleu_ngram` is sentence-level n-gram BLEU (clipped precisions up to
//! 4-grams, epsilon smoothing for zero precisions, brevity penalty).
//! Semantic similarity is the cosine between mean-pooled encoder states of a
//! pretrained generator, standing in for an external sentence encoder.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::GeneratorModel;
use crate::text::{decode, encode, tokenize, TextError, TokenSequence, Vocabulary, PAD};
use crate::train::TrainingConfig;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no evaluation pairs")]
    Empty,
    #[error("malformed pair line {line}: expected `awkward<TAB>reference`")]
    BadPair { line: usize },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Bag-of-words precision: |BOW(candidate) ∩ BOW(reference)| / |BOW(candidate)|.
/// An empty candidate scores 0.
pub fn bleu_bow(candidate: &[String], reference: &[String]) -> f64 {
    let cand: HashSet<&str> = candidate.iter().map(String::as_str).collect();
    if cand.is_empty() {
        return 0.0;
    }
    let refset: HashSet<&str> = reference.iter().map(String::as_str).collect();
    cand.intersection(&refset).count() as f64 / cand.len() as f64
}

const NGRAM_EPS: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n && n > 0 {
        for window in tokens.windows(n) {
            *counts.entry(window).or_default() += 1;
        }
    }
    counts
}

/// Sentence-level n-gram BLEU: geometric mean of clipped n-gram precisions
/// for n = 1..=min(max_n, candidate length), zero precisions replaced by a
/// tiny epsilon, times the brevity penalty exp(1 - |r|/|c|) when the
/// candidate is shorter than the reference.
pub fn bleu_ngram(candidate: &[String], reference: &[String], max_n: usize) -> f64 {
    if candidate.is_empty() || reference.is_empty() || max_n == 0 {
        return 0.0;
    }
    let top_n = max_n.min(candidate.len());
    let mut log_sum = 0.0f64;
    for n in 1..=top_n {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let total: usize = cand.values().sum();
        let clipped: usize = cand
            .iter()
            .map(|(gram, &c)| c.min(refc.get(gram).copied().unwrap_or(0)))
            .sum();
        let p = if clipped == 0 {
            NGRAM_EPS
        } else {
            clipped as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let geo = (log_sum / top_n as f64).exp();
    let bp = if candidate.len() < reference.len() {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    } else {
        1.0
    };
    geo * bp
}

/// Mean over non-PAD positions of the pretrained generator's encoder
/// outputs; length H (LSTM) or D (transformer).
pub fn sentence_embedding(seq: &TokenSequence, generator: &GeneratorModel) -> Vec<f32> {
    let outputs = generator.encoder_outputs(seq);
    let hidden = outputs.shape()[1];
    let mut acc = vec![0.0f32; hidden];
    let mut count = 0usize;
    for (t, &id) in seq.ids.iter().enumerate() {
        if id == PAD {
            continue;
        }
        for (a, &v) in acc.iter_mut().zip(&outputs.data()[t * hidden..(t + 1) * hidden]) {
            *a += v;
        }
        count += 1;
    }
    if count > 0 {
        let inv = 1.0 / count as f32;
        acc.iter_mut().for_each(|v| *v *= inv);
    }
    acc
}

/// Cosine similarity; a zero vector yields 0 with a warning on stderr.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        eprintln!("warning: cosine of a zero vector, returning 0.0");
        return 0.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub input: String,
    pub output: String,
    pub reference: String,
    pub bleu_bow: f64,
    pub bleu_ngram: f64,
    pub cosine: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Means {
    pub bleu_bow: f64,
    pub bleu_ngram: f64,
    pub cosine: f64,
}

/// Per-sentence records plus corpus means; serialized as the report JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: TrainingConfig,
    pub timestamp: String,
    pub means: Means,
    pub sentences: Vec<SentenceRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn utc_timestamp() -> String {
    match std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        Ok(d) => format!("{}.{:03}Z", d.as_secs(), d.subsec_millis()),
        Err(_) => "0Z".to_string(),
    }
}

/// Greedy-decode every awkward input and score it against its reference
/// with all three metrics.
pub fn evaluate_corpus(
    generator: &GeneratorModel,
    vocab: &Vocabulary,
    pairs: &[(String, String)],
    config: &TrainingConfig,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let max_len = generator.max_len();
    let inputs: Vec<TokenSequence> = pairs
        .iter()
        .map(|(awk, _)| encode(&tokenize(awk), vocab, max_len))
        .collect();
    let mut outputs = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(32) {
        outputs.extend(generator.decode_greedy_batch(chunk));
    }

    let mut sentences = Vec::with_capacity(pairs.len());
    let (mut sum_bow, mut sum_ngram, mut sum_cos) = (0.0f64, 0.0f64, 0.0f64);
    for (((awk, reference), input_seq), output_seq) in
        pairs.iter().zip(&inputs).zip(&outputs)
    {
        let output_text = decode(output_seq, vocab);
        let cand_tokens = tokenize(&output_text);
        let ref_tokens = tokenize(reference);
        let bow = bleu_bow(&cand_tokens, &ref_tokens);
        let ngram = bleu_ngram(&cand_tokens, &ref_tokens, 4);
        let ref_seq = encode(&ref_tokens, vocab, max_len);
        let cos = cosine(
            &sentence_embedding(output_seq, generator),
            &sentence_embedding(&ref_seq, generator),
        );
        let _ = input_seq;
        sum_bow += bow;
        sum_ngram += ngram;
        sum_cos += cos;
        sentences.push(SentenceRecord {
            input: awk.clone(),
            output: output_text,
            reference: reference.clone(),
            bleu_bow: bow,
            bleu_ngram: ngram,
            cosine: cos,
        });
    }
    let n = sentences.len() as f64;
    Ok(EvalReport {
        config: config.clone(),
        timestamp: utc_timestamp(),
        means: Means {
            bleu_bow: sum_bow / n,
            bleu_ngram: sum_ngram / n,
            cosine: sum_cos / n,
        },
        sentences,
    })
}

/// Pair file: one `awkward<TAB>reference` per line, UTF-8.
pub fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (awk, reference) = line.split_once('\t').ok_or(EvalError::BadPair { line: i + 1 })?;
        pairs.push((awk.to_string(), reference.to_string()));
    }
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(pairs)
}
