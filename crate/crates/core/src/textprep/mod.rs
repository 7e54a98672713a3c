//! Arabic text preprocessing and sequence encoding.
//!
//! The pipeline runs eight steps in a fixed order: digit removal, non-Arabic
//! filtering, punctuation removal, normalization (diacritics and tatweel),
//! whitespace tokenization, stop-word removal, light stemming, and
//! per-review duplicate removal. Word lists and stemming rules come from the
//! data files under `data/`, so behavior is pinned by those files.

pub mod clean;
mod dataset;
mod lexicon;
mod vocab;

use std::collections::HashSet;

pub use clean::{normalize, remove_digits, strip_non_arabic, strip_punctuation, tokenize};
pub use dataset::{load_dataset_csv, parse_dataset_csv, Dataset, Label, LabelSet, RawSample};
pub use lexicon::{AffixKind, LightStemmer, StemRule, StopWords, MIN_STEMMABLE_LEN};
pub use vocab::{encode, EncodedSample, Vocabulary, DEFAULT_MAX_VOCAB, DEFAULT_SEQ_LEN, OOV_INDEX, PAD_INDEX};

#[derive(Debug, thiserror::Error)]
pub enum TextprepError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary max_size must be at least 3, got {0}")]
    VocabTooSmall(usize),
    #[error("stem rule file, line {line}: {message}")]
    RuleFile { line: usize, message: String },
    #[error("dataset row {row}: {message}")]
    DatasetRow { row: usize, message: String },
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A review after the full preprocessing pipeline.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProcessedSample {
    pub id: String,
    pub tokens: Vec<String>,
}

/// Keeps the first occurrence of each token.
pub fn dedupe(tokens: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::with_capacity(tokens.len());
    tokens.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

/// The configured eight-step pipeline.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    stopwords: StopWords,
    stemmer: LightStemmer,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(StopWords::bundled(), LightStemmer::bundled())
    }
}

impl Preprocessor {
    pub fn new(stopwords: StopWords, stemmer: LightStemmer) -> Self {
        Self { stopwords, stemmer }
    }

    pub fn stopwords(&self) -> &StopWords {
        &self.stopwords
    }

    pub fn remove_stopwords(&self, tokens: Vec<String>) -> Vec<String> {
        self.stopwords.filter(tokens)
    }

    /// Light-stems every token. A strip that would turn a token into a
    /// stop-word is refused, which keeps the pipeline a fixed point on its
    /// own output.
    pub fn stem(&self, tokens: Vec<String>) -> Vec<String> {
        tokens
            .iter()
            .map(|t| self.stemmer.stem_guarded(t, |s| !self.stopwords.contains(s)))
            .collect()
    }

    pub fn clean(&self, text: &str) -> String {
        let text = remove_digits(text);
        let text = strip_non_arabic(&text);
        let text = strip_punctuation(&text);
        normalize(&text)
    }

    pub fn preprocess(&self, text: &str) -> Vec<String> {
        let tokens = tokenize(&self.clean(text));
        let tokens = self.remove_stopwords(tokens);
        let tokens = self.stem(tokens);
        dedupe(tokens)
    }

    pub fn process_sample(&self, sample: &RawSample) -> ProcessedSample {
        ProcessedSample {
            id: sample.id.clone(),
            tokens: self.preprocess(&sample.text),
        }
    }
}

/// Runs the bundled pipeline.
pub fn preprocess(text: &str) -> Vec<String> {
    Preprocessor::default().preprocess(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn dedupe_keeps_first_occurrences() {
        assert_eq!(dedupe(toks(&["جيد", "جيد", "جدا"])), toks(&["جيد", "جدا"]));
        assert_eq!(dedupe(toks(&["ا", "ب", "ا", "ب"])), toks(&["ا", "ب"]));
        assert!(dedupe(vec![]).is_empty());
    }

    #[test]
    fn pipeline_examples() {
        let p = Preprocessor::default();
        assert_eq!(
            p.preprocess("الطلب وصل متأخر 30 دقيقة 😡"),
            toks(&["طلب", "وصل", "متأخر", "دقيق"])
        );
        assert!(p.preprocess("").is_empty());
        assert!(p.preprocess("123 !!").is_empty());
        assert_eq!(p.stem(toks(&["والخدمة"])), toks(&["خدم"]));
        assert_eq!(p.stem(toks(&["جيد"])), toks(&["جيد"]));
        assert!(p.stem(vec![]).is_empty());
    }

    #[test]
    fn stem_refuses_to_produce_a_stopword() {
        // "وهذا" is not listed but stripping its conjunction would leave "هذا"
        let p = Preprocessor::default();
        assert!(!p.stopwords().contains("وهذا"));
        assert_eq!(p.stem(toks(&["وهذا"])), toks(&["وهذا"]));
    }

    fn arabic_text() -> impl Strategy<Value = String> {
        let pieces = prop::sample::select(vec![
            "ال", "و", "ب", "ة", "ها", "ات", "ين", "ي", "ك", "م", "ر", "ح", "س", "ط", "ع", "ن",
            "أ", "إ", "آ", "ى", "ء", "ـ", "َ", "ً", "ّ", " ", " ", "  ", "\n", "3", "٤", "۷",
            "a", "Z", "!", "،", "؟", ".", "😀", "👍", "في", "هذا", "من", "لا", "\u{200C}",
        ]);
        prop::collection::vec(pieces, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(text in arabic_text()) {
            let p = Preprocessor::default();
            let once = p.preprocess(&text);
            let twice = p.preprocess(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn output_tokens_are_arabic_letters_only(text in arabic_text()) {
            for tok in preprocess(&text) {
                prop_assert!(!tok.is_empty());
                prop_assert!(tok.chars().all(clean::is_arabic_letter), "{tok:?}");
            }
        }

        #[test]
        fn dedupe_output_is_distinct_subsequence(v in prop::collection::vec(0u8..6, 0..30)) {
            let input: Vec<String> = v.iter().map(|b| b.to_string()).collect();
            let out = dedupe(input.clone());
            let distinct: HashSet<_> = out.iter().collect();
            prop_assert_eq!(distinct.len(), out.len());
            let mut it = input.iter();
            for o in &out {
                prop_assert!(it.any(|x| x == o));
            }
        }
    }
}
