//! Tokenization, vocabulary, corpus I/O, batching, and synthetic
//! awkward-sentence generation.
//!
//! Training data is monolingual: fluent sentences come from any plain text
//! corpus (one sentence per line), and their "awkward" counterparts are
//! produced by seeded corruption rules ([`corrupt`]). The [`synth`] module
//! can generate a small self-contained English corpus for demos and tests.

pub mod batch;
pub mod corrupt;
pub mod synth;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum TextError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("invalid vocabulary file {path}: {reason}")]
    BadVocabFile { path: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TextError>;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const NUM_SPECIALS: usize = 4;

const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Characters split off as standalone tokens.
const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')', '-'];

/// Lowercase and split into tokens: punctuation becomes its own token,
/// everything else splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if PUNCTUATION.contains(&ch) {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(ch.to_string());
        } else {
            word.push(ch);
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Token <-> id mapping with fixed specials PAD=0, BOS=1, EOS=2, UNK=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Keep the `max_size - 4` most frequent tokens; frequency ties break
    /// lexicographically (earlier token wins). Errors on a token-free corpus.
    pub fn build(corpus: &[Vec<String>], max_size: usize) -> Result<Self> {
        if max_size <= NUM_SPECIALS {
            return Err(TextError::Invalid(format!(
                "vocabulary size must exceed {NUM_SPECIALS}, got {max_size}"
            )));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for sentence in corpus {
            for token in sentence {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(TextError::EmptyCorpus(
                "no tokens to build a vocabulary from".into(),
            ));
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);

        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(ranked.iter().map(|(t, _)| t.to_string()));
        Ok(Self::from_ordered(id_to_token))
    }

    fn from_ordered(id_to_token: Vec<String>) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
        }
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token_of(&self, id: u32) -> &str {
        self.id_to_token
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(SPECIAL_TOKENS[UNK as usize])
    }

    /// Non-special tokens in id order (id = position + 4).
    pub fn regular_tokens(&self) -> &[String] {
        &self.id_to_token[NUM_SPECIALS..]
    }

    /// Reassemble from the non-special token list in id order.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        Self::from_ordered(id_to_token)
    }

    /// File format: header line `#fluencygan-vocab v1`, then one token per
    /// line; the token on line k (after the header, 0-based) has id k + 4.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("#fluencygan-vocab v1\n");
        for token in self.regular_tokens() {
            out.push_str(token);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|source| TextError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = text.lines();
        match lines.next() {
            Some("#fluencygan-vocab v1") => {}
            other => {
                return Err(TextError::BadVocabFile {
                    path: path.display().to_string(),
                    reason: format!("bad header {other:?}"),
                })
            }
        }
        Ok(Self::from_tokens(
            lines.map(str::to_string).collect::<Vec<_>>(),
        ))
    }
}

/// An integer-encoded sentence. When produced by [`encode`] it is
/// model-bound: begins with BOS, ends with EOS, padded to a fixed length,
/// with PAD only after EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Non-PAD flags, aligned with `ids`.
    pub fn mask(&self) -> Vec<bool> {
        self.ids.iter().map(|&id| id != PAD).collect()
    }

    /// Number of leading non-PAD positions (BOS through EOS inclusive).
    pub fn content_len(&self) -> usize {
        self.ids.iter().take_while(|&&id| id != PAD).count()
    }

    /// Ids with all specials removed.
    pub fn content_ids(&self) -> Vec<u32> {
        self.ids
            .iter()
            .copied()
            .filter(|&id| id as usize >= NUM_SPECIALS)
            .collect()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.ids)
    }
}

/// Encode tokens as [BOS, ids.., EOS, PAD..] of exactly `max_len` ids,
/// truncating over-long sentences while preserving the EOS.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    assert!(max_len >= 3, "max_len must be at least 3");
    let keep = tokens.len().min(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(BOS);
    ids.extend(tokens[..keep].iter().map(|t| vocab.id_of(t)));
    ids.push(EOS);
    ids.resize(max_len, PAD);
    TokenSequence::new(ids)
}

/// Strip specials and join with single spaces.
pub fn decode(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    seq.content_ids()
        .iter()
        .map(|&id| vocab.token_of(id))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases() {
        assert_eq!(
            tokenize("Is an incredible monument"),
            vec!["is", "an", "incredible", "monument"]
        );
    }

    #[test]
    fn tokenize_detaches_punctuation() {
        assert_eq!(tokenize("over 35."), vec!["over", "35", "."]);
        assert_eq!(
            tokenize("voa special english program ."),
            vec!["voa", "special", "english", "program", "."]
        );
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t ").is_empty());
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vocab_keeps_most_frequent() {
        let corpus = vec![toks(&["a", "a", "b"])];
        let vocab = Vocabulary::build(&corpus, 6).unwrap();
        assert_eq!(vocab.id_of("a"), 4);
        assert_eq!(vocab.id_of("b"), 5);
        assert_eq!(vocab.id_of("c"), UNK);
    }

    #[test]
    fn vocab_truncates_to_max_size() {
        let corpus = vec![toks(&["a", "a", "b"])];
        let vocab = Vocabulary::build(&corpus, 5).unwrap();
        assert_eq!(vocab.size(), 5);
        assert_eq!(vocab.id_of("a"), 4);
        assert_eq!(vocab.id_of("b"), UNK);
    }

    #[test]
    fn vocab_ties_break_lexicographically() {
        let corpus = vec![toks(&["y", "x"])];
        let vocab = Vocabulary::build(&corpus, 5).unwrap();
        assert_eq!(vocab.id_of("x"), 4);
        assert_eq!(vocab.id_of("y"), UNK);
    }

    #[test]
    fn vocab_rejects_empty_corpus() {
        assert!(Vocabulary::build(&[], 10).is_err());
        assert!(Vocabulary::build(&[vec![]], 10).is_err());
    }

    #[test]
    fn encode_frames_and_pads() {
        let vocab = Vocabulary::build(&[toks(&["hi"])], 8).unwrap();
        let seq = encode(&toks(&["hi"]), &vocab, 5);
        assert_eq!(seq.ids, vec![BOS, vocab.id_of("hi"), EOS, PAD, PAD]);
    }

    #[test]
    fn encode_truncates_preserving_eos() {
        let corpus = vec![toks(&["a", "b", "c", "d", "e"])];
        let vocab = Vocabulary::build(&corpus, 16).unwrap();
        let seq = encode(&corpus[0], &vocab, 4);
        assert_eq!(seq.len(), 4);
        assert_eq!(seq.ids[0], BOS);
        assert_eq!(seq.ids[3], EOS);
    }

    #[test]
    fn out_of_vocab_encodes_to_unk() {
        let vocab = Vocabulary::build(&[toks(&["a"])], 8).unwrap();
        let seq = encode(&toks(&["zzz"]), &vocab, 5);
        assert_eq!(seq.ids[1], UNK);
    }

    #[test]
    fn decode_strips_specials() {
        let corpus = vec![toks(&["the", "cat", "sat"])];
        let vocab = Vocabulary::build(&corpus, 16).unwrap();
        let seq = encode(&corpus[0], &vocab, 8);
        assert_eq!(decode(&seq, &vocab), "the cat sat");
    }

    #[test]
    fn vocab_file_round_trip(){
        let corpus = vec![toks(&["alpha", "beta", "beta", "gamma"])];
        let vocab = Vocabulary::build(&corpus, 12).unwrap();
        let dir = std::env::temp_dir().join("fluencygan-vocab-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vocab.txt");
        vocab.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(vocab, loaded);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#fluencygan-vocab v1\n"));
    }
}
