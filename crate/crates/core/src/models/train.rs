use serde::{Deserialize, Serialize};

use super::metrics::predict_classes;
use super::{round4, ModelError, ModelSpec, Network, TrainConfig};
use crate::nn::{AdamState, Mode, RngStream, Tensor2D};
use crate::textprep::EncodedSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(serialize_with = "round4")]
    pub train_loss: f64,
    #[serde(serialize_with = "round4")]
    pub val_loss: f64,
    #[serde(serialize_with = "round4")]
    pub train_acc: f64,
    #[serde(serialize_with = "round4")]
    pub val_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once validation loss has failed to improve on its minimum for
/// `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_loss: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best_loss {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            StopDecision::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// A network restored to its best validation epoch.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub seed: u64,
}

impl TrainedModel {
    pub fn spec(&self) -> &ModelSpec {
        self.network.spec()
    }

    /// Inference-mode class distributions; binary models return `[1 - p, p]`.
    pub fn predict_proba(&self, samples: &[EncodedSample]) -> Result<Vec<Vec<f64>>, ModelError> {
        let ids: Vec<&[u32]> = samples.iter().map(|s| s.ids.as_slice()).collect();
        self.network.clone().predict_proba(&ids)
    }
}

#[derive(Debug, Clone)]
struct Snapshot {
    values: Vec<Tensor2D>,
    stats: Vec<(Tensor2D, Tensor2D)>,
}

impl Network {
    fn snapshot(&mut self) -> Snapshot {
        Snapshot {
            values: self.params_mut().iter().map(|p| p.value.clone()).collect(),
            stats: self
                .batchnorms_mut()
                .into_iter()
                .map(|(_, bn)| (bn.running_mean.clone(), bn.running_var.clone()))
                .collect(),
        }
    }

    fn restore(&mut self, snap: &Snapshot) {
        for (p, v) in self.params_mut().into_iter().zip(&snap.values) {
            p.value = v.clone();
        }
        for ((_, bn), (m, v)) in self.batchnorms_mut().into_iter().zip(&snap.stats) {
            bn.running_mean = m.clone();
            bn.running_var = v.clone();
        }
    }
}

/// Index batches for one epoch. A trailing batch of one sample joins the
/// previous batch so batch-norm always sees at least two rows.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = order.len() - size - 1;
        *out.last_mut().expect("at least one batch") = &order[start..];
    }
    out
}

fn mean_loss_and_acc(
    net: &mut Network,
    samples: &[EncodedSample],
) -> Result<(f64, f64), ModelError> {
    let ids: Vec<&[u32]> = samples.iter().map(|s| s.ids.as_slice()).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label_index).collect();
    let mut rng = RngStream::new(0);
    let (mut loss, mut correct) = (0.0, 0usize);
    for (chunk, lab) in ids.chunks(256).zip(labels.chunks(256)) {
        let probs = net.forward(chunk, Mode::INFER, &mut rng)?;
        let (l, _) = net.loss_from_probs(&probs, lab)?;
        loss += l * chunk.len() as f64;
        correct += predict_classes(&probs).iter().zip(lab).filter(|(p, y)| p == y).count();
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam training with early stopping on validation loss. The
/// returned model carries the parameters and batch-norm statistics of the
/// epoch with the lowest validation loss.
pub fn train(
    mut network: Network,
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    config: &TrainConfig,
) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptySet("training"));
    }
    if val_set.is_empty() {
        return Err(ModelError::EmptySet("validation"));
    }
    let root = RngStream::new(config.seed);
    let mut shuffle_rng = root.derive(1);
    let mut dropout_rng = root.derive(2);
    let mut adam = AdamState::new(config.adam);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut history = Vec::new();
    let mut best = network.snapshot();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in batches(&order, config.batch_size) {
            let ids: Vec<&[u32]> = batch.iter().map(|&i| train_set[i].ids.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].label_index).collect();
            let (loss, probs) = network.train_batch(&ids, &labels, Mode::TRAIN, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            correct += predict_classes(&probs).iter().zip(&labels).filter(|(p, y)| p == y).count();
            adam.step(&mut network.params_mut())?;
        }
        if network.params_mut().iter().any(|p| !p.value.is_finite()) {
            return Err(ModelError::Diverged { epoch });
        }
        let (val_loss, val_acc) = mean_loss_and_acc(&mut network, val_set)?;
        if !val_loss.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        let n = train_set.len() as f64;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            val_loss,
            train_acc: correct as f64 / n,
            val_acc,
        });
        log::debug!("epoch {epoch}: train_loss {:.4} val_loss {val_loss:.4}", loss_sum / n);
        match stopper.observe(epoch, val_loss) {
            super::StopDecision::Improved => best = network.snapshot(),
            super::StopDecision::Continue => {}
            super::StopDecision::Stop => break,
        }
    }
    network.restore(&best);
    Ok(TrainedModel {
        network,
        history,
        best_epoch: stopper.best_epoch(),
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_one_stops_after_first_worse_epoch() {
        let mut es = EarlyStopping::new(1);
        assert_eq!(es.observe(1, 0.5), StopDecision::Improved);
        assert_eq!(es.observe(2, 0.6), StopDecision::Stop);
        assert_eq!(es.best_epoch(), 1);
    }

    #[test]
    fn patience_counts_consecutive_non_improvements() {
        let mut es = EarlyStopping::new(3);
        let losses = [1.0, 0.9, 0.95, 0.92, 0.85, 0.9, 0.9, 0.9];
        let decisions: Vec<StopDecision> =
            losses.iter().enumerate().map(|(i, &l)| es.observe(i + 1, l)).collect();
        assert_eq!(decisions[4], StopDecision::Improved);
        assert_eq!(decisions[7], StopDecision::Stop);
        assert_eq!(es.best_epoch(), 5);
        // equal loss is not an improvement
        let mut es = EarlyStopping::new(1);
        es.observe(1, 0.5);
        assert_eq!(es.observe(2, 0.5), StopDecision::Stop);
    }

    #[test]
    fn trailing_singleton_is_merged() {
        let order: Vec<usize> = (0..65).collect();
        let b = batches(&order, 32);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![32, 33]);
        let order: Vec<usize> = (0..66).collect();
        assert_eq!(batches(&order, 32).len(), 3);
        let order = [7usize];
        assert_eq!(batches(&order, 32), vec![&[7usize][..]]);
    }
}
