//! Minimal dense-tensor engine for small recurrent classifiers.
//!
//! The layer set is closed (embedding, SimpleRNN, LSTM, GRU, batch-norm,
//! dense) and every layer carries a hand-written backward pass. Recurrent
//! layers backpropagate exactly through time. All arithmetic is `f64`.

mod adam;
mod batchnorm;
mod dd;
mod dense;
mod embedding;
mod gradcheck;
pub mod harness;
pub mod init;
mod loss;
mod recurrent;
mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{batchnorm, BatchNorm, BN_EPSILON, BN_MOMENTUM};
pub use dd::DoubleDouble;
pub use dense::{dense_forward, sigmoid, softmax_rows, Dense, OutputActivation};
pub use embedding::{embedding_forward, Embedding};
pub use gradcheck::{grad_check, relative_error, Differentiable, GradCheckReport};
pub use loss::{bce_grad, bce_loss, categorical_ce, categorical_ce_grad, PROB_CLAMP};
pub use recurrent::{
    gru_step, lstm_step, simple_rnn_step, Gru, GruWeights, Lstm, LstmWeights, SeqGrad, SimpleRnn,
};
pub use rng::{derive_seed, RngStream};
pub use tensor::Tensor2D;

pub(crate) use tensor::{gemm_nn, gemm_nt, gemm_tn};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index {index} out of range for {rows} embedding rows")]
    Index { index: usize, rows: usize },
    #[error("batch-norm in training mode needs at least 2 rows, got {0}")]
    DegenerateBatch(usize),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backward called before forward")]
    NoForwardCache,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor2D,
    pub grad: Tensor2D,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor2D) -> Self {
        let grad = Tensor2D::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// How a forward pass behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    /// Batch statistics in batch-norm, caches kept for backward.
    pub training: bool,
    /// Draw dropout masks (only meaningful when `training`).
    pub dropout: bool,
    /// Update batch-norm running statistics (only when `training`).
    pub update_stats: bool,
}

impl Mode {
    pub const TRAIN: Mode = Mode {
        training: true,
        dropout: true,
        update_stats: true,
    };
    pub const INFER: Mode = Mode {
        training: false,
        dropout: false,
        update_stats: false,
    };
    /// Training-mode arithmetic without randomness or side effects; used by
    /// gradient checks.
    pub const CHECK: Mode = Mode {
        training: true,
        dropout: false,
        update_stats: false,
    };
}

/// Input and recurrent dropout rates of a recurrent layer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DropoutSpec {
    pub input_rate: f64,
    pub recurrent_rate: f64,
}

impl DropoutSpec {
    pub const NONE: DropoutSpec = DropoutSpec {
        input_rate: 0.0,
        recurrent_rate: 0.0,
    };

    pub fn new(input_rate: f64, recurrent_rate: f64) -> Result<Self, NnError> {
        for r in [input_rate, recurrent_rate] {
            if !(0.0..1.0).contains(&r) {
                return Err(NnError::InvalidArgument(format!("dropout rate {r} not in [0, 1)")));
            }
        }
        Ok(Self {
            input_rate,
            recurrent_rate,
        })
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut RngStream) -> Tensor2D {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} not in [0, 1)");
    if rate == 0.0 {
        return Tensor2D::filled(rows, cols, 1.0);
    }
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
        .collect();
    Tensor2D::new(rows, cols, data).expect("finite mask")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropout_rate_zero_is_all_ones() {
        let m = dropout_mask(3, 4, 0.0, &mut RngStream::new(1));
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dropout_mean_is_one_within_three_sigma() {
        // Each entry is 2·Bernoulli(0.5): mean 1, variance 1, so the mean of
        // 10,000 draws has sigma 0.01.
        let m = dropout_mask(100, 100, 0.5, &mut RngStream::new(9));
        let mean = m.data().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 3.0 * 0.01, "mean {mean}");
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_is_seed_deterministic() {
        let a = dropout_mask(5, 5, 0.3, &mut RngStream::new(5));
        let b = dropout_mask(5, 5, 0.3, &mut RngStream::new(5));
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_spec_validates_rates() {
        assert!(DropoutSpec::new(0.5, 0.5).is_ok());
        assert!(DropoutSpec::new(1.0, 0.0).is_err());
        assert!(DropoutSpec::new(0.0, -0.1).is_err());
    }
}
