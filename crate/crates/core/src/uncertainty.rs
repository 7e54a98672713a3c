//! Predictive-entropy scoring and top-k selection of unlabeled samples.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Allowed deviation of a distribution's total from 1.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UncertaintyError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub sample_id: String,
    /// Shannon entropy in nats.
    pub entropy: f64,
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64, UncertaintyError> {
    if dist.is_empty() {
        return Err(UncertaintyError::InvalidDistribution("empty".into()));
    }
    if let Some(p) = dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(UncertaintyError::InvalidDistribution(format!("entry {p}")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(UncertaintyError::InvalidDistribution(format!("sums to {total}")));
    }
    let h: f64 = dist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    Ok(h.max(0.0))
}

/// Pairs every id with the entropy of its predicted distribution.
pub fn score_pool<S: AsRef<str>>(
    ids: &[S],
    probs: &[Vec<f64>],
) -> Result<Vec<UncertaintyScore>, UncertaintyError> {
    if ids.len() != probs.len() {
        return Err(UncertaintyError::InvalidDistribution(format!(
            "{} ids for {} distributions",
            ids.len(),
            probs.len()
        )));
    }
    ids.iter()
        .zip(probs)
        .map(|(id, p)| {
            Ok(UncertaintyScore {
                sample_id: id.as_ref().to_owned(),
                entropy: entropy(p)?,
            })
        })
        .collect()
}

fn rank(a: &UncertaintyScore, b: &UncertaintyScore) -> Ordering {
    b.entropy
        .total_cmp(&a.entropy)
        .then_with(|| a.sample_id.cmp(&b.sample_id))
}

/// The `k` highest-entropy ids, most uncertain first; equal entropies go
/// to the smaller id.
pub fn select_batch(scores: &[UncertaintyScore], k: usize) -> Vec<String> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let mut order: Vec<&UncertaintyScore> = scores.iter().collect();
    order.select_nth_unstable_by(k - 1, |a, b| rank(a, b));
    order.truncate(k);
    order.sort_by(|a, b| rank(a, b));
    order.into_iter().map(|s| s.sample_id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(id: &str, entropy: f64) -> UncertaintyScore {
        UncertaintyScore {
            sample_id: id.into(),
            entropy,
        }
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.5, 0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[0.9, 0.1]).unwrap() - 0.325_083).abs() < 1e-6);
    }

    #[test]
    fn malformed_distributions_are_rejected() {
        for bad in [&[][..], &[0.5, 0.4], &[1.2, -0.2], &[f64::NAN, 1.0]] {
            assert!(entropy(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn selection_examples() {
        let scores = [s("a", 0.1), s("b", 0.69), s("c", 0.5)];
        assert_eq!(select_batch(&scores, 2), ["b", "c"]);
        assert!(select_batch(&scores, 0).is_empty());
        assert_eq!(select_batch(&scores, 10), ["b", "c", "a"]);
        assert_eq!(select_batch(&[s("b", 0.5), s("a", 0.5)], 1), ["a"]);
    }

    #[test]
    fn score_pool_checks_lengths() {
        assert!(score_pool(&["a"], &[]).is_err());
        let scored = score_pool(&["a"], &[vec![0.5, 0.5]]).unwrap();
        assert_eq!(scored[0].sample_id, "a");
    }
}
