//! Architecture presets, training with early stopping, evaluation metrics
//! and dataset splitting.

mod checkpoint;
mod metrics;
mod network;
mod split;
mod train;
mod wide;

use serde::{Deserialize, Serialize};

use crate::nn::{AdamConfig, DropoutSpec, NnError};
use crate::textprep::{DEFAULT_MAX_VOCAB, DEFAULT_SEQ_LEN};

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_VERSION};
pub use metrics::{evaluate, metrics_from_predictions, predict_classes, MetricsReport};
pub use network::{build_model, closed_form_parameter_count, Network};
pub use split::{split_dataset, SplitSpec};
pub use train::{train, EarlyStopping, EpochRecord, StopDecision, TrainedModel};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("dataset too small: need at least {needed} samples, got {got}")]
    DatasetTooSmall { needed: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("label index {index} out of range for {classes} classes")]
    LabelOutOfRange { index: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Rnn,
    Lstm,
    Gru,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Rnn, Arch::Lstm, Arch::Gru];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Rnn => "rnn",
            Arch::Lstm => "lstm",
            Arch::Gru => "gru",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(Arch::Rnn),
            "lstm" => Ok(Arch::Lstm),
            "gru" => Ok(Arch::Gru),
            other => Err(ModelError::Spec(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Network shape. The RNN preset stacks two SimpleRNN layers of `units`
/// each; LSTM and GRU have one recurrent layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub seq_len: usize,
    pub units: usize,
    pub dropout: DropoutSpec,
    pub output_classes: usize,
}

impl ModelSpec {
    pub fn preset(arch: Arch, output_classes: usize) -> Self {
        let (units, rate) = match arch {
            Arch::Rnn => (32, 0.2),
            Arch::Lstm => (32, 0.5),
            Arch::Gru => (16, 0.5),
        };
        Self {
            arch,
            vocab_size: DEFAULT_MAX_VOCAB,
            embed_dim: 32,
            seq_len: DEFAULT_SEQ_LEN,
            units,
            dropout: DropoutSpec {
                input_rate: rate,
                recurrent_rate: rate,
            },
            output_classes,
        }
    }

    /// Units in the dense output layer: one sigmoid unit for two classes,
    /// otherwise one softmax unit per class.
    pub fn output_units(&self) -> usize {
        if self.output_classes == 2 {
            1
        } else {
            self.output_classes
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Spec(m.to_owned()));
        if self.vocab_size < 3 {
            return fail("vocab_size must be at least 3");
        }
        if self.embed_dim == 0 || self.seq_len == 0 || self.units == 0 {
            return fail("embed_dim, seq_len and units must be positive");
        }
        if self.output_classes < 2 {
            return fail("output_classes must be at least 2");
        }
        DropoutSpec::new(self.dropout.input_rate, self.dropout.recurrent_rate)
            .map_err(|e| ModelError::Spec(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    /// 20 epochs for RNN and LSTM, 100 for GRU; batch 32 and patience 5 for
    /// all.
    pub fn preset(arch: Arch, seed: u64) -> Self {
        Self {
            epochs: if arch == Arch::Gru { 100 } else { 20 },
            batch_size: 32,
            patience: 5,
            seed,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(ModelError::Spec("epochs, batch_size and patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Serializes an `f64` rounded to four decimals.
pub(crate) fn round4<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_to(*v, 4))
}

pub(crate) fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}
