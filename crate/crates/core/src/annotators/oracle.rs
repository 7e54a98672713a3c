use std::collections::HashMap;

use super::{AnnotationRequest, AnnotationResult, Annotator, AnnotatorError, Source};
use crate::textprep::{Dataset, Label};

/// Replays gold labels; stands in for a perfect human annotator.
#[derive(Debug, Clone, Default)]
pub struct OracleAnnotator {
    gold: HashMap<String, Label>,
}

impl OracleAnnotator {
    pub fn new(gold: HashMap<String, Label>) -> Self {
        Self { gold }
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        Self::new(
            dataset
                .samples
                .iter()
                .filter_map(|s| s.gold_label.map(|l| (s.id.clone(), l)))
                .collect(),
        )
    }
}

impl Annotator for OracleAnnotator {
    fn source(&self) -> Source {
        Source::Oracle
    }

    fn annotate(&self, requests: &[AnnotationRequest]) -> Vec<Result<AnnotationResult, AnnotatorError>> {
        requests
            .iter()
            .map(|r| match self.gold.get(&r.sample_id) {
                Some(&label) => Ok(AnnotationResult {
                    sample_id: r.sample_id.clone(),
                    label,
                    source: Source::Oracle,
                    raw_response: None,
                    latency_ms: None,
                }),
                None => Err(AnnotatorError::MissingGold(r.sample_id.clone())),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::LabelSet;

    fn req(id: &str) -> AnnotationRequest {
        AnnotationRequest {
            sample_id: id.into(),
            raw_text: String::new(),
            label_set: LabelSet::binary(),
        }
    }

    #[test]
    fn replays_gold_and_reports_missing_ids() {
        let oracle = OracleAnnotator::new(HashMap::from([("a".to_string(), Label::Positive)]));
        let out = oracle.annotate(&[req("a"), req("zz")]);
        assert_eq!(out[0].as_ref().unwrap().label, Label::Positive);
        assert_eq!(out[0].as_ref().unwrap().source, Source::Oracle);
        assert_eq!(out[1], Err(AnnotatorError::MissingGold("zz".into())));
        assert!(oracle.annotate(&[]).is_empty());
    }
}
