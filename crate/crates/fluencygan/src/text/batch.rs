//! Corpus files and training batches.

use std::path::Path;

use crate::rng::Rng;
use crate::text::{tokenize, Result, TextError, TokenSequence, PAD};

/// Read a one-sentence-per-line UTF-8 corpus and tokenize it.
/// Blank lines are skipped; an effectively empty file is an error.
pub fn load_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let sentences: Vec<Vec<String>> = text
        .lines()
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(TextError::EmptyCorpus(path.display().to_string()));
    }
    Ok(sentences)
}

/// Write sentences back as one line each (LF terminators).
pub fn save_corpus(path: &Path, lines: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Aligned awkward/fluent id matrices plus the awkward-side non-PAD mask.
#[derive(Debug, Clone)]
pub struct Batch {
    pub awkward: Vec<TokenSequence>,
    pub fluent: Vec<TokenSequence>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.awkward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.awkward.is_empty()
    }
}

/// Shuffle aligned pairs by seed and chunk them; the final partial batch is
/// kept.
pub fn make_batches(
    awkward: &[TokenSequence],
    fluent: &[TokenSequence],
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<Vec<Batch>> {
    if awkward.len() != fluent.len() {
        return Err(TextError::Invalid(format!(
            "awkward/fluent corpora must align: {} vs {} sentences",
            awkward.len(),
            fluent.len()
        )));
    }
    if awkward.is_empty() {
        return Err(TextError::EmptyCorpus("no sentences to batch".into()));
    }
    if batch_size == 0 {
        return Err(TextError::Invalid("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..awkward.len()).collect();
    Rng::new(shuffle_seed).shuffle(&mut order);

    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let a: Vec<TokenSequence> = chunk.iter().map(|&i| awkward[i].clone()).collect();
            let f: Vec<TokenSequence> = chunk.iter().map(|&i| fluent[i].clone()).collect();
            let mask = a
                .iter()
                .map(|s| s.ids.iter().map(|&id| id != PAD).collect())
                .collect();
            Batch {
                awkward: a,
                fluent: f,
                mask,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{encode, Vocabulary};

    fn seqs(n: usize) -> Vec<TokenSequence> {
        let corpus: Vec<Vec<String>> = (0..n)
            .map(|i| vec![format!("w{i}"), "x".to_string()])
            .collect();
        let vocab = Vocabulary::build(&corpus, 64).unwrap();
        corpus.iter().map(|s| encode(s, &vocab, 6)).collect()
    }

    #[test]
    fn batch_sizes_keep_final_partial() {
        let s = seqs(10);
        let batches = make_batches(&s, &s, 4, 0).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn same_seed_same_order() {
        let s = seqs(16);
        let a = make_batches(&s, &s, 4, 7).unwrap();
        let b = make_batches(&s, &s, 4, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.awkward, y.awkward);
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = std::env::temp_dir().join("fluencygan-batch-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.txt");
        std::fs::write(&path, "").unwrap();
        assert!(load_corpus(&path).is_err());
        assert!(load_corpus(Path::new("/no/such/file.txt")).is_err());
    }

    #[test]
    fn mask_tracks_pad_positions() {
        let s = seqs(2);
        let batches = make_batches(&s, &s, 2, 0).unwrap();
        for (seq, mask) in batches[0].awkward.iter().zip(&batches[0].mask) {
            for (&id, &m) in seq.ids.iter().zip(mask) {
                assert_eq!(id != PAD, m);
            }
        }
    }
}
