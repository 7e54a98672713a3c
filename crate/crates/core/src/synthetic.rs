//! Seeded generator of balanced binary Arabic-script reviews whose label is
//! fixed by planted sentiment keywords.
//!
//! Each review holds 5 to 12 words: one or two keywords drawn from its
//! class's list and filler words from a procedurally generated lexicon that
//! shares no stem with either list. Optional surface noise (digits, Latin
//! words, emoji, punctuation, tatweel, diacritics) exercises the cleaning
//! steps without touching the label signal, since preprocessing removes all
//! of it.

use std::collections::HashSet;
use std::path::Path;

use crate::nn::RngStream;
use crate::textprep::{Dataset, Label, Preprocessor, RawSample, TextprepError};

pub const POSITIVE_KEYWORDS: [&str; 15] = [
    "ممتاز", "رائع", "لذيذ", "جميل", "سريع", "نظيف", "مذهل", "ممتع", "طازج", "مريح", "أنيق", "شهي", "مبدع",
    "لطيف", "موفق",
];

pub const NEGATIVE_KEYWORDS: [&str; 15] = [
    "سيء", "رديء", "بارد", "متأخر", "قذر", "مزعج", "بطيء", "محبط", "فاسد", "غالي", "مقرف", "سخيف", "مالح",
    "تالف", "ضعيف",
];

const FILLER_LETTERS: [char; 22] = [
    'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف', 'ق', 'م', 'ن',
];

const NOISE: [&str; 10] = ["2023", "٣٠", "OK", "delivery", "😀", "👍", "!!", "،", "...", "؟"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Total reviews; half of them positive (odd totals round negatives up).
    pub n: usize,
    pub seed: u64,
    pub filler_words: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub noise: bool,
}

impl SyntheticSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            filler_words: 400,
            min_words: 5,
            max_words: 12,
            noise: true,
        }
    }
}

/// Filler vocabulary: random consonant strings of 3 to 5 letters whose
/// preprocessed form is a single token that is neither a keyword stem nor
/// another filler's stem.
pub fn filler_lexicon(count: usize, rng: &mut RngStream) -> Vec<String> {
    let pre = Preprocessor::default();
    let mut taken: HashSet<String> = POSITIVE_KEYWORDS
        .iter()
        .chain(&NEGATIVE_KEYWORDS)
        .flat_map(|k| pre.preprocess(k))
        .collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let len = 3 + rng.below(3);
        let word: String = (0..len).map(|_| FILLER_LETTERS[rng.below(FILLER_LETTERS.len())]).collect();
        if let [stem] = pre.preprocess(&word).as_slice() {
            if taken.insert(stem.clone()) {
                out.push(word);
            }
        }
    }
    out
}

fn decorate(word: &str, rng: &mut RngStream) -> String {
    match rng.below(10) {
        // tatweel after the first letter
        0 => {
            let mut chars = word.chars();
            let first = chars.next().unwrap_or_default();
            format!("{first}\u{0640}{}", chars.as_str())
        }
        // fatha after the first letter
        1 => {
            let mut chars = word.chars();
            let first = chars.next().unwrap_or_default();
            format!("{first}\u{064E}{}", chars.as_str())
        }
        _ => word.to_owned(),
    }
}

pub fn generate(spec: &SyntheticSpec) -> Dataset {
    let mut rng = RngStream::new(spec.seed);
    let filler = filler_lexicon(spec.filler_words, &mut rng.derive(1));
    let mut labels: Vec<Label> = (0..spec.n)
        .map(|i| if i < spec.n / 2 { Label::Positive } else { Label::Negative })
        .collect();
    rng.shuffle(&mut labels);
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let keywords: &[&str] = match label {
                Label::Positive => &POSITIVE_KEYWORDS,
                _ => &NEGATIVE_KEYWORDS,
            };
            let len = spec.min_words + rng.below(spec.max_words - spec.min_words + 1);
            let planted = 1 + rng.below(2);
            let mut words: Vec<String> = (0..len)
                .map(|j| {
                    if j < planted {
                        keywords[rng.below(keywords.len())].to_owned()
                    } else {
                        filler[rng.below(filler.len())].clone()
                    }
                })
                .collect();
            rng.shuffle(&mut words);
            if spec.noise {
                words = words.iter().map(|w| decorate(w, &mut rng)).collect();
                if rng.below(3) == 0 {
                    let at = rng.below(words.len() + 1);
                    words.insert(at, NOISE[rng.below(NOISE.len())].to_owned());
                }
            }
            RawSample {
                id: format!("syn-{i:05}"),
                text: words.join(" "),
                gold_label: Some(label),
            }
        })
        .collect();
    Dataset::from_samples(&format!("synthetic-{}", spec.seed), samples).expect("generated ids are unique")
}

/// Writes `id,text,label` rows, the format `load_dataset_csv` reads.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), TextprepError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "text", "label"])?;
    for s in &dataset.samples {
        w.write_record([s.id.as_str(), s.text.as_str(), s.gold_label.map(Label::name).unwrap_or("")])?;
    }
    w.flush()?;
    Ok(())
}
