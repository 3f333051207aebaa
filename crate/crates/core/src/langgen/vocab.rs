//! Vocabulary closure and token sequences.

use super::bank::{PatternTok, TemplateBank};
use std::collections::BTreeSet;

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;

/// Bidirectional word/index map. Index 0 is PAD, 1 is OOV; the remaining
/// entries are the sorted closure of the template bank plus digit tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: std::collections::HashMap<String, u32>,
}

impl Vocabulary {
    /// Closure of the bank over all lexicons, class words, pattern literals,
    /// and digit tokens 0..=99.
    pub fn from_bank(bank: &TemplateBank) -> Vocabulary {
        let mut set: BTreeSet<String> = BTreeSet::new();
        for (sg, pl) in &bank.class_words {
            set.insert(sg.clone());
            set.insert(pl.clone());
        }
        for phrase in bank.dir_lexicon.iter().chain(bank.dist_lexicon.iter()) {
            for w in phrase {
                set.insert(w.clone());
            }
        }
        for v in &bank.variants {
            for pat in [Some(&v.status), Some(&v.patch), v.empty.as_ref()].into_iter().flatten() {
                for tok in pat.iter() {
                    if let PatternTok::Word(w) = tok {
                        set.insert(w.clone());
                    }
                }
            }
        }
        for n in 0..100u32 {
            set.insert(n.to_string());
        }
        let mut words = vec!["<pad>".to_string(), "<oov>".to_string()];
        words.extend(set);
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word_of(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(|s| s.as_str())
    }

    /// Index-ordered word list, one per line.
    pub fn export(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    /// Stable content hash, recorded in checkpoints.
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.export().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Fixed-length padded index sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub true_length: usize,
}

/// Lowercase lookup, OOV fallback, truncate at `l_max`, pad with zeros.
/// The second return is true when the sentence was truncated.
pub fn tokenize(words: &[String], vocab: &Vocabulary, l_max: usize) -> (TokenSeq, bool) {
    assert!(l_max >= 1, "l_max must be at least 1");
    let truncated = words.len() > l_max;
    let mut ids = Vec::with_capacity(l_max);
    for w in words.iter().take(l_max) {
        let lw = w.to_lowercase();
        ids.push(vocab.id_of(&lw).unwrap_or(OOV_ID));
    }
    let true_length = ids.len();
    ids.resize(l_max, PAD_ID);
    (TokenSeq { ids, true_length }, truncated)
}

/// Inverse of `tokenize` for in-vocabulary tokens; pads are dropped.
pub fn detokenize(seq: &TokenSeq, vocab: &Vocabulary) -> Vec<String> {
    seq.ids[..seq.true_length]
        .iter()
        .map(|&id| vocab.word_of(id).unwrap_or("<oov>").to_string())
        .collect()
}
