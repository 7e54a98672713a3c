use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ProcessedSample, TextprepError};

pub const PAD_INDEX: u32 = 0;
pub const OOV_INDEX: u32 = 1;
pub const DEFAULT_MAX_VOCAB: usize = 2000;
pub const DEFAULT_SEQ_LEN: usize = 100;

/// Frequency-ranked word index. Index 0 is padding, 1 is out-of-vocabulary,
/// corpus words take 2.. in descending frequency with lexicographic ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    max_size: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn build(corpus: &[ProcessedSample], max_size: usize) -> Result<Self, TextprepError> {
        if max_size < 3 {
            return Err(TextprepError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for sample in corpus {
            for tok in &sample.tokens {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(TextprepError::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - 2);
        let words = ranked.into_iter().map(|(w, _)| w.to_owned()).collect();
        Ok(Self::from_words(words, max_size))
    }

    pub fn from_words(words: Vec<String>, max_size: usize) -> Self {
        let mut v = Self {
            words,
            max_size,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + 2))
            .collect();
    }

    /// Restores the lookup table after deserialization.
    pub fn reindexed(mut self) -> Self {
        self.rebuild_index();
        self
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn index_of(&self, word: &str) -> u32 {
        self.get(word).unwrap_or(OOV_INDEX)
    }

    /// Number of ids in use, including pad and OOV.
    pub fn size(&self) -> usize {
        self.words.len() + 2
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    /// Corpus words in index order (the first has index 2).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.max_size as u64).to_le_bytes());
        for w in &self.words {
            h.update(w.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

/// A fixed-length id sequence ready for the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub id: String,
    pub ids: Vec<u32>,
    pub label_index: usize,
}

/// Maps tokens to ids, then pre-pads with [`PAD_INDEX`] or pre-truncates
/// (keeping the last `seq_len` ids).
pub fn encode(tokens: &[String], vocab: &Vocabulary, seq_len: usize) -> Vec<u32> {
    let start = tokens.len().saturating_sub(seq_len);
    let kept = &tokens[start..];
    let mut ids = vec![PAD_INDEX; seq_len - kept.len()];
    ids.extend(kept.iter().map(|t| vocab.index_of(t)));
    ids
}
