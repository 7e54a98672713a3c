use serde::{Deserialize, Serialize};

use super::{round4, ModelError, TrainedModel};
use crate::nn::Tensor2D;
use crate::textprep::EncodedSample;

/// Test-set metrics. Binary reports use the positive class (index 1);
/// multiclass reports macro-average precision and recall. F1 is the harmonic
/// mean of the reported precision and recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "round4")]
    pub accuracy: f64,
    #[serde(serialize_with = "round4")]
    pub precision: f64,
    #[serde(serialize_with = "round4")]
    pub recall: f64,
    #[serde(serialize_with = "round4")]
    pub f1: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn metrics_from_predictions(
    predicted: &[usize],
    gold: &[usize],
    classes: usize,
) -> Result<MetricsReport, ModelError> {
    if gold.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    if predicted.len() != gold.len() {
        return Err(ModelError::Spec(format!(
            "{} predictions for {} labels",
            predicted.len(),
            gold.len()
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &g) in predicted.iter().zip(gold) {
        if p >= classes || g >= classes {
            return Err(ModelError::LabelOutOfRange {
                index: p.max(g),
                classes,
            });
        }
        confusion[g][p] += 1;
    }
    let total = gold.len();
    let trace: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let col = |c: usize| (0..classes).map(|r| confusion[r][c]).sum::<usize>();
    let row = |c: usize| confusion[c].iter().sum::<usize>();
    let (precision, recall) = if classes == 2 {
        (ratio(confusion[1][1], col(1)), ratio(confusion[1][1], row(1)))
    } else {
        let k = classes as f64;
        (
            (0..classes).map(|c| ratio(confusion[c][c], col(c))).sum::<f64>() / k,
            (0..classes).map(|c| ratio(confusion[c][c], row(c))).sum::<f64>() / k,
        )
    };
    Ok(MetricsReport {
        accuracy: ratio(trace, total),
        precision,
        recall,
        f1: harmonic(precision, recall),
        confusion,
    })
}

/// Threshold 0.5 for a single sigmoid column, argmax otherwise (first index
/// wins ties).
pub fn predict_classes(probs: &Tensor2D) -> Vec<usize> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            if row.len() == 1 {
                usize::from(row[0] >= 0.5)
            } else {
                argmax(row)
            }
        })
        .collect()
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(model: &TrainedModel, test_set: &[EncodedSample]) -> Result<MetricsReport, ModelError> {
    if test_set.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    let dists = model.predict_proba(test_set)?;
    let predicted: Vec<usize> = dists.iter().map(|d| argmax_binary_aware(d)).collect();
    let gold: Vec<usize> = test_set.iter().map(|s| s.label_index).collect();
    metrics_from_predictions(&predicted, &gold, model.spec().output_classes)
}

/// `[1 - p, p]` rows are thresholded at `p >= 0.5` so that an exact tie
/// resolves like the sigmoid head.
fn argmax_binary_aware(dist: &[f64]) -> usize {
    if dist.len() == 2 {
        usize::from(dist[1] >= 0.5)
    } else {
        argmax(dist)
    }
}
