use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TextprepError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Neutral,
    Positive,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Negative, Label::Neutral, Label::Positive];

    pub fn name(self) -> &'static str {
        match self {
            Label::Negative => "Negative",
            Label::Neutral => "Neutral",
            Label::Positive => "Positive",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Label::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

/// The ordered label set of a dataset. Order is canonical
/// (Negative, Neutral, Positive) so label indices match an alphabetical
/// label encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet(Vec<Label>);

impl LabelSet {
    pub fn new(labels: impl IntoIterator<Item = Label>) -> Self {
        let mut v: Vec<Label> = labels.into_iter().collect();
        v.sort();
        v.dedup();
        Self(v)
    }

    pub fn binary() -> Self {
        Self(vec![Label::Negative, Label::Positive])
    }

    pub fn ternary() -> Self {
        Self(Label::ALL.to_vec())
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.0.iter().position(|&l| l == label)
    }

    pub fn label_at(&self, index: usize) -> Option<Label> {
        self.0.get(index).copied()
    }

    pub fn contains(&self, label: Label) -> bool {
        self.0.contains(&label)
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(|l| l.name().to_owned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub id: String,
    pub text: String,
    pub gold_label: Option<Label>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<RawSample>,
    pub label_set: LabelSet,
    /// Hex SHA-256 of the source bytes.
    pub content_hash: String,
}

impl Dataset {
    /// Builds a dataset from in-memory samples, deriving the label set from
    /// the gold labels present. The content hash covers ids, texts and labels.
    pub fn from_samples(name: &str, samples: Vec<RawSample>) -> Result<Self, TextprepError> {
        check_ids(&samples)?;
        let label_set = LabelSet::new(samples.iter().filter_map(|s| s.gold_label));
        let mut hasher = Sha256::new();
        for s in &samples {
            hasher.update(s.id.as_bytes());
            hasher.update([0x1f]);
            hasher.update(s.text.as_bytes());
            hasher.update([0x1f]);
            hasher.update(s.gold_label.map(Label::name).unwrap_or("").as_bytes());
            hasher.update([0x1e]);
        }
        Ok(Self {
            name: name.to_owned(),
            samples,
            label_set,
            content_hash: hex::encode(hasher.finalize()),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn check_ids(samples: &[RawSample]) -> Result<(), TextprepError> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(TextprepError::DuplicateId(s.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

/// Parses an `id,text,label` CSV. An empty label cell leaves the sample
/// unlabeled.
pub fn parse_dataset_csv(name: &str, bytes: &[u8]) -> Result<Dataset, TextprepError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = reader.headers()?.clone();
    for required in ["id", "text"] {
        if !headers.iter().any(|h| h == required) {
            return Err(TextprepError::DatasetRow {
                row: 1,
                message: format!("missing `{required}` column"),
            });
        }
    }
    let mut samples = Vec::new();
    for (i, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row_no = i + 2;
        let row = row?;
        if row.text.is_empty() {
            return Err(TextprepError::DatasetRow {
                row: row_no,
                message: format!("sample `{}` has empty text", row.id),
            });
        }
        let gold_label = match row.label.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(l) => Some(
                l.parse::<Label>()
                    .map_err(|message| TextprepError::DatasetRow { row: row_no, message })?,
            ),
        };
        samples.push(RawSample {
            id: row.id,
            text: row.text,
            gold_label,
        });
    }
    let mut ds = Dataset::from_samples(name, samples)?;
    ds.content_hash = hex::encode(Sha256::digest(bytes));
    Ok(ds)
}

pub fn load_dataset_csv(path: &Path) -> Result<Dataset, TextprepError> {
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned());
    parse_dataset_csv(&name, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_quoting_and_labels() {
        let csv = "id,text,label\n1,\"جميل، جدا\",positive\n2,سيء,Negative\n3,\"قال \"\"لا\"\"\",\n";
        let ds = parse_dataset_csv("t", csv.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.samples[0].text, "جميل، جدا");
        assert_eq!(ds.samples[0].gold_label, Some(Label::Positive));
        assert_eq!(ds.samples[2].text, "قال \"لا\"");
        assert_eq!(ds.samples[2].gold_label, None);
        assert_eq!(ds.label_set, LabelSet::binary());
        assert_eq!(ds.content_hash.len(), 64);
    }

    #[test]
    fn csv_errors() {
        let dup = "id,text,label\n1,ا,Positive\n1,ب,Negative\n";
        assert!(matches!(
            parse_dataset_csv("t", dup.as_bytes()),
            Err(TextprepError::DuplicateId(id)) if id == "1"
        ));
        let bad = "id,text,label\n1,ا,Happy\n";
        assert!(matches!(
            parse_dataset_csv("t", bad.as_bytes()),
            Err(TextprepError::DatasetRow { row: 2, .. })
        ));
        let empty = "id,text,label\n1,,Positive\n";
        assert!(parse_dataset_csv("t", empty.as_bytes()).is_err());
        let no_text = "id,body\n1,x\n";
        assert!(parse_dataset_csv("t", no_text.as_bytes()).is_err());
    }

    #[test]
    fn label_set_is_canonically_ordered() {
        let ls = LabelSet::new([Label::Positive, Label::Negative, Label::Neutral, Label::Positive]);
        assert_eq!(ls, LabelSet::ternary());
        assert_eq!(ls.index_of(Label::Neutral), Some(1));
        assert_eq!(ls.names(), vec!["Negative", "Neutral", "Positive"]);
        assert_eq!(LabelSet::binary().index_of(Label::Positive), Some(1));
    }
}
