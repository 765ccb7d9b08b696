use std::collections::HashMap;

use super::{Result, WorldError};

/// Upper bound on the number of enumerated strings.
pub const MAX_STRINGS: usize = 1 << 20;

/// All token sequences of length `0..=max_len`, in length-then-lexicographic
/// order where the lexicographic order follows the vocabulary order.
///
/// Sequences are rendered by concatenation when every token is a single
/// character and joined by single spaces otherwise.
#[derive(Debug, Clone)]
pub struct StringSpace {
    vocab: Vec<String>,
    max_len: usize,
    sequences: Vec<Vec<usize>>,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    spaced: bool,
}

impl StringSpace {
    pub fn new(vocab: Vec<String>, max_len: usize) -> Result<Self> {
        if vocab.is_empty() {
            return Err(WorldError::Invalid("empty vocabulary".into()));
        }
        for (i, t) in vocab.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(WorldError::Invalid(format!("bad token {t:?}")));
            }
            if vocab[..i].contains(t) {
                return Err(WorldError::Invalid(format!("duplicate token {t:?}")));
            }
        }
        let size = space_size(vocab.len(), max_len)
            .filter(|&n| n <= MAX_STRINGS)
            .ok_or_else(|| {
                WorldError::Invalid(format!(
                    "{} tokens up to length {max_len} exceed {MAX_STRINGS} strings",
                    vocab.len()
                ))
            })?;

        let spaced = vocab.iter().any(|t| t.chars().count() != 1);
        let mut sequences = Vec::with_capacity(size);
        let base = vocab.len();
        let mut layer = 1usize;
        for len in 0..=max_len {
            // base-|V| digits, first position most significant
            for mut code in 0..layer {
                let mut seq = vec![0usize; len];
                for slot in seq.iter_mut().rev() {
                    *slot = code % base;
                    code /= base;
                }
                sequences.push(seq);
            }
            layer = layer.saturating_mul(base);
        }
        debug_assert_eq!(sequences.len(), size);

        let sep = if spaced { " " } else { "" };
        let labels: Vec<String> = sequences
            .iter()
            .map(|s| s.iter().map(|&t| vocab[t].as_str()).collect::<Vec<_>>().join(sep))
            .collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(Self { vocab, max_len, sequences, labels, index, spaced })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn tokens(&self, i: usize) -> &[usize] {
        &self.sequences[i]
    }

    pub fn lookup(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Token ids of arbitrary text over this vocabulary, of any length.
    pub fn parse(&self, text: &str) -> Option<Vec<usize>> {
        let pos = |t: &str| self.vocab.iter().position(|v| v == t);
        if self.spaced {
            text.split_whitespace().map(pos).collect()
        } else {
            let mut buf = [0u8; 4];
            text.chars().map(|c| pos(c.encode_utf8(&mut buf))).collect()
        }
    }
}

fn space_size(vocab: usize, max_len: usize) -> Option<usize> {
    let mut total: usize = 0;
    let mut layer: usize = 1;
    for _ in 0..=max_len {
        total = total.checked_add(layer)?;
        layer = layer.checked_mul(vocab)?;
    }
    Some(total)
}

/// Enumerates all strings of length `0..=max_len` over `vocab`, empty string
/// first, in length-then-lexicographic order.
pub fn enumerate_strings<S: AsRef<str>>(vocab: &[S], max_len: usize) -> Result<Vec<String>> {
    let vocab = vocab.iter().map(|s| s.as_ref().to_string()).collect();
    Ok(StringSpace::new(vocab, max_len)?.labels)
}
