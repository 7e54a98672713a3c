use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::record::DatasetRef;
use super::OrchestratorError;
use crate::models::{split_dataset, SplitSpec};
use crate::textprep::{encode, Dataset, EncodedSample, Label, LabelSet, Preprocessor, RawSample, Vocabulary};

/// A training-split sample as the pool sees it: text and features, no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolItem {
    pub id: String,
    pub raw_text: String,
    pub ids: Vec<u32>,
}

impl PoolItem {
    pub fn encoded(&self, label_index: usize) -> EncodedSample {
        EncodedSample {
            id: self.id.clone(),
            ids: self.ids.clone(),
            label_index,
        }
    }
}

/// One dataset preprocessed, split and encoded. Baseline and AL runs built
/// from the same dataset and split seed see identical splits.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: DatasetRef,
    pub label_set: LabelSet,
    pub split_seed: u64,
    pub vocab: Vocabulary,
    pub train: Vec<PoolItem>,
    /// Gold labels of training samples that have one.
    pub train_gold: HashMap<String, Label>,
    pub val: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
    pub test_hash: String,
}

impl PreparedData {
    /// The full training split with gold labels; every sample must have one.
    pub fn train_encoded(&self) -> Result<Vec<EncodedSample>, OrchestratorError> {
        self.train
            .iter()
            .map(|item| {
                let label = self
                    .train_gold
                    .get(&item.id)
                    .ok_or_else(|| OrchestratorError::MissingGold(item.id.clone()))?;
                Ok(item.encoded(self.label_index(*label)?))
            })
            .collect()
    }

    pub fn label_index(&self, label: Label) -> Result<usize, OrchestratorError> {
        self.label_set.index_of(label).ok_or_else(|| {
            OrchestratorError::InvalidArgument(format!(
                "label {} is not in {:?}",
                label.name(),
                self.label_set.names()
            ))
        })
    }
}

/// Preprocesses every review, splits 60/20/20 with `split_seed`, builds the
/// vocabulary from the training split's texts and encodes all three splits.
/// Validation and test samples must carry gold labels.
pub fn prepare(
    dataset: &Dataset,
    split_seed: u64,
    max_vocab: usize,
    seq_len: usize,
) -> Result<PreparedData, OrchestratorError> {
    if dataset.label_set.len() < 2 {
        return Err(OrchestratorError::InvalidArgument(format!(
            "dataset `{}` has fewer than two distinct gold labels",
            dataset.name
        )));
    }
    let (train, val, test) = split_dataset(&dataset.samples, &SplitSpec::standard(split_seed))?;
    let pre = Preprocessor::default();
    let processed: Vec<_> = train.iter().map(|s| pre.process_sample(s)).collect();
    let vocab = Vocabulary::build(&processed, max_vocab)?;

    let train_gold = train.iter().filter_map(|s| Some((s.id.clone(), s.gold_label?))).collect();
    let train = train
        .iter()
        .zip(&processed)
        .map(|(s, p)| PoolItem {
            id: s.id.clone(),
            raw_text: s.text.clone(),
            ids: encode(&p.tokens, &vocab, seq_len),
        })
        .collect();
    let encode_labeled = |samples: &[RawSample]| -> Result<Vec<EncodedSample>, OrchestratorError> {
        samples
            .iter()
            .map(|s| {
                let label = s.gold_label.ok_or_else(|| OrchestratorError::MissingGold(s.id.clone()))?;
                Ok(EncodedSample {
                    id: s.id.clone(),
                    ids: encode(&pre.process_sample(s).tokens, &vocab, seq_len),
                    label_index: dataset.label_set.index_of(label).expect("label set covers gold labels"),
                })
            })
            .collect()
    };
    let val = encode_labeled(&val)?;
    let test = encode_labeled(&test)?;
    let test_hash = split_hash(&test);
    Ok(PreparedData {
        dataset: DatasetRef {
            name: dataset.name.clone(),
            content_hash: dataset.content_hash.clone(),
            samples: dataset.len(),
            label_set: dataset.label_set.names(),
        },
        label_set: dataset.label_set.clone(),
        split_seed,
        vocab,
        train,
        train_gold,
        val,
        test,
        test_hash,
    })
}

/// Hex SHA-256 over ids, encoded features and label indices, in order.
pub fn split_hash(samples: &[EncodedSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.id.as_bytes());
        h.update([0]);
        for id in &s.ids {
            h.update(id.to_le_bytes());
        }
        h.update((s.label_index as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}
