use serde::{Deserialize, Serialize};

use super::{AnnotationRequest, Annotator, AnnotatorError};
use crate::nn::RngStream;
use crate::textprep::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorScore {
    pub name: String,
    /// Exact-match rate against gold; failures count as wrong.
    #[serde(serialize_with = "crate::models::round4")]
    pub accuracy: f64,
    pub correct: usize,
    pub failures: Vec<SampleFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub seed: u64,
    pub n: usize,
    /// The single draw every annotator was scored on, in draw order.
    pub sample_ids: Vec<String>,
    pub scores: Vec<AnnotatorScore>,
}

/// Scores each annotator on one seeded draw of `n` gold-labeled samples.
pub fn benchmark_annotators(
    dataset: &Dataset,
    n: usize,
    annotators: &[(&str, &dyn Annotator)],
    seed: u64,
) -> Result<BenchmarkReport, AnnotatorError> {
    let mut labeled: Vec<_> = dataset.samples.iter().filter(|s| s.gold_label.is_some()).collect();
    if n == 0 || n > labeled.len() {
        return Err(AnnotatorError::InvalidArgument(format!(
            "cannot draw {n} samples from {} labeled ones",
            labeled.len()
        )));
    }
    RngStream::new(seed).shuffle(&mut labeled);
    labeled.truncate(n);
    let requests: Vec<AnnotationRequest> = labeled
        .iter()
        .map(|s| AnnotationRequest {
            sample_id: s.id.clone(),
            raw_text: s.text.clone(),
            label_set: dataset.label_set.clone(),
        })
        .collect();
    let scores = annotators
        .iter()
        .map(|(name, annotator)| {
            let results = annotator.annotate(&requests);
            let mut correct = 0;
            let mut failures = Vec::new();
            for (sample, result) in labeled.iter().zip(results) {
                match result {
                    Ok(r) if Some(r.label) == sample.gold_label => correct += 1,
                    Ok(_) => {}
                    Err(e) => failures.push(SampleFailure {
                        sample_id: sample.id.clone(),
                        error: e.to_string(),
                    }),
                }
            }
            AnnotatorScore {
                name: (*name).to_owned(),
                accuracy: correct as f64 / n as f64,
                correct,
                failures,
            }
        })
        .collect();
    Ok(BenchmarkReport {
        dataset: dataset.name.clone(),
        seed,
        n,
        sample_ids: requests.into_iter().map(|r| r.sample_id).collect(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotators::{AnnotationResult, OracleAnnotator, Source};
    use crate::textprep::{Label, RawSample};

    struct Always(Label);

    impl Annotator for Always {
        fn source(&self) -> Source {
            Source::Llm
        }

        fn annotate(&self, requests: &[AnnotationRequest]) -> Vec<Result<AnnotationResult, AnnotatorError>> {
            requests
                .iter()
                .map(|r| {
                    Ok(AnnotationResult {
                        sample_id: r.sample_id.clone(),
                        label: self.0,
                        source: Source::Llm,
                        raw_response: None,
                        latency_ms: None,
                    })
                })
                .collect()
        }
    }

    fn balanced(n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| RawSample {
                id: format!("s{i:04}"),
                text: format!("نص {i}"),
                gold_label: Some(if i % 2 == 0 { Label::Positive } else { Label::Negative }),
            })
            .collect();
        Dataset::from_samples("balanced", samples).unwrap()
    }

    #[test]
    fn oracle_is_perfect_and_draws_are_shared() {
        let ds = balanced(400);
        let oracle = OracleAnnotator::from_dataset(&ds);
        let wrong = Always(Label::Positive);
        let report = benchmark_annotators(&ds, 200, &[("oracle", &oracle), ("fixed", &wrong)], 9).unwrap();
        assert_eq!(report.sample_ids.len(), 200);
        assert_eq!(report.scores[0].accuracy, 1.0);
        // count the positives in the shared draw by hand
        let positives = report
            .sample_ids
            .iter()
            .filter(|id| id[1..].parse::<usize>().unwrap() % 2 == 0)
            .count();
        assert_eq!(report.scores[1].correct, positives);
        assert!((report.scores[1].accuracy - 0.5).abs() < 0.1);
        let again = benchmark_annotators(&ds, 200, &[("oracle", &oracle), ("fixed", &wrong)], 9).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn oversized_draw_is_rejected_and_failures_count_as_wrong() {
        let ds = balanced(10);
        let oracle = OracleAnnotator::default();
        assert!(benchmark_annotators(&ds, 11, &[("o", &oracle)], 1).is_err());
        let report = benchmark_annotators(&ds, 10, &[("o", &oracle)], 1).unwrap();
        assert_eq!(report.scores[0].accuracy, 0.0);
        assert_eq!(report.scores[0].failures.len(), 10);
    }
}
