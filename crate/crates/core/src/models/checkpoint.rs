use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_model, ModelError, ModelSpec, Network, TrainedModel};
use crate::nn::{RngStream, Tensor2D};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl NamedTensor {
    fn new(name: String, t: &Tensor2D) -> Self {
        Self {
            name,
            rows: t.rows(),
            cols: t.cols(),
            data: t.data().to_vec(),
        }
    }

    fn tensor(&self) -> Result<Tensor2D, ModelError> {
        Tensor2D::new(self.rows, self.cols, self.data.clone())
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", self.name)))
    }
}

/// Self-describing model document: spec, trainable parameters, batch-norm
/// running statistics, vocabulary hash and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: ModelSpec,
    pub params: Vec<NamedTensor>,
    pub running_stats: Vec<NamedTensor>,
    pub vocab_hash: String,
    pub seed: u64,
    pub best_epoch: usize,
}

impl Checkpoint {
    pub fn from_model(model: &TrainedModel, vocab_hash: &str) -> Self {
        let mut net = model.network.clone();
        let params = net
            .params_mut()
            .iter()
            .map(|p| NamedTensor::new(p.name.clone(), &p.value))
            .collect();
        let running_stats = net
            .batchnorms_mut()
            .into_iter()
            .flat_map(|(name, bn)| {
                [
                    NamedTensor::new(format!("{name}.running_mean"), &bn.running_mean),
                    NamedTensor::new(format!("{name}.running_var"), &bn.running_var),
                ]
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            spec: net.spec().clone(),
            params,
            running_stats,
            vocab_hash: vocab_hash.to_owned(),
            seed: model.seed,
            best_epoch: model.best_epoch,
        }
    }

    /// Rebuilds the network; names and shapes must match the spec exactly.
    pub fn to_network(&self) -> Result<Network, ModelError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let mut net = build_model(&self.spec, &mut RngStream::new(0))?;
        {
            let params = net.params_mut();
            if params.len() != self.params.len() {
                return Err(ModelError::Checkpoint("parameter count mismatch".into()));
            }
            for (p, saved) in params.into_iter().zip(&self.params) {
                let t = saved.tensor()?;
                if p.name != saved.name || p.value.shape() != t.shape() {
                    return Err(ModelError::Checkpoint(format!("unexpected tensor {}", saved.name)));
                }
                p.value = t;
            }
        }
        let bns = net.batchnorms_mut();
        if bns.len() * 2 != self.running_stats.len() {
            return Err(ModelError::Checkpoint("running statistics mismatch".into()));
        }
        for ((_, bn), pair) in bns.into_iter().zip(self.running_stats.chunks(2)) {
            bn.running_mean = pair[0].tensor()?;
            bn.running_var = pair[1].tensor()?;
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_vec(self).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}
