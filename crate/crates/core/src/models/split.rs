use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::nn::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn standard(seed: u64) -> Self {
        Self {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            seed,
        }
    }

    /// `(train, val, test)` counts: validation and test are floored, the
    /// remainder goes to training.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let val = (n as f64 * self.val_frac + 1e-9).floor() as usize;
        let test = (n as f64 * self.test_frac + 1e-9).floor() as usize;
        (n - val - test, val, test)
    }
}

/// Shuffles with the spec's seed, then slices into train, validation and
/// test.
pub fn split_dataset<T: Clone>(
    samples: &[T],
    spec: &SplitSpec,
) -> Result<(Vec<T>, Vec<T>, Vec<T>), ModelError> {
    if samples.len() < 5 {
        return Err(ModelError::DatasetTooSmall {
            needed: 5,
            got: samples.len(),
        });
    }
    let fracs = [spec.train_frac, spec.val_frac, spec.test_frac];
    if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(ModelError::Spec("split fractions must be in [0, 1] and sum to 1".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    RngStream::new(spec.seed).shuffle(&mut order);
    let (n_train, n_val, _) = spec.counts(samples.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<T>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn floor_counts_with_remainder_to_train() {
        let s = SplitSpec::standard(1);
        assert_eq!(s.counts(10), (6, 2, 2));
        assert_eq!(s.counts(11), (7, 2, 2));
        assert_eq!(s.counts(5), (3, 1, 1));
        let items: Vec<u32> = (0..11).collect();
        let (a, b, c) = split_dataset(&items, &s).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (7, 2, 2));
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            split_dataset(&[1, 2, 3, 4], &SplitSpec::standard(0)),
            Err(ModelError::DatasetTooSmall { needed: 5, got: 4 })
        ));
    }

    proptest! {
        #[test]
        fn partition_and_determinism(n in 5usize..300, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let spec = SplitSpec::standard(seed);
            let (a, b, c) = split_dataset(&items, &spec).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(&all, &items);
            prop_assert_eq!(split_dataset(&items, &spec).unwrap(), (a, b, c));
        }
    }
}
