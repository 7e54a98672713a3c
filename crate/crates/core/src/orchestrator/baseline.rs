use std::collections::BTreeMap;

use super::data::prepare;
use super::record::{make_run_id, now, CycleRecord, RunConfig, RunKind, RunRecord, RunStatus, RunStore, SCHEMA_VERSION};
use super::OrchestratorError;
use crate::models::{build_model, evaluate, round_to, train, EpochRecord, ModelError, ModelSpec, TrainConfig, TrainedModel};
use crate::nn::RngStream;
use crate::textprep::{Dataset, EncodedSample};

/// Builds a freshly initialized network from `config.seed` and trains it.
pub(crate) fn fit(
    spec: &ModelSpec,
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    config: &TrainConfig,
) -> Result<TrainedModel, ModelError> {
    let network = build_model(spec, &mut RngStream::new(config.seed).derive(3))?;
    train(network, train_set, val_set, config)
}

pub(crate) fn check_spec(spec: &ModelSpec, classes: usize) -> Result<(), OrchestratorError> {
    if spec.output_classes != classes {
        return Err(OrchestratorError::InvalidArgument(format!(
            "model has {} output classes but the dataset has {classes} labels",
            spec.output_classes
        )));
    }
    Ok(())
}

/// Trains on the full gold-labeled training split and evaluates once on
/// the test split. The split seed is `config.seed`. The record is saved
/// when a store is given.
pub fn run_baseline(
    dataset: &Dataset,
    spec: &ModelSpec,
    config: &TrainConfig,
    store: Option<&RunStore>,
) -> Result<RunRecord, OrchestratorError> {
    train_baseline(dataset, spec, config, store).map(|(record, _)| record)
}

/// [`run_baseline`] that also hands back the trained model.
pub fn train_baseline(
    dataset: &Dataset,
    spec: &ModelSpec,
    config: &TrainConfig,
    store: Option<&RunStore>,
) -> Result<(RunRecord, TrainedModel), OrchestratorError> {
    check_spec(spec, dataset.label_set.len())?;
    let data = prepare(dataset, config.seed, spec.vocab_size, spec.seq_len)?;
    let train_set = data.train_encoded()?;
    let model = fit(spec, &train_set, &data.val, config)?;
    let metrics = evaluate(&model, &data.test)?;

    let mut cycle = CycleRecord::with_metrics(1, train_set.len(), &metrics);
    cycle.annotation_sources = BTreeMap::from([("gold".to_owned(), train_set.len())]);
    cycle.best_epoch = model.best_epoch;
    cycle.train_seed = config.seed;
    cycle.test_hash = data.test_hash.clone();

    let created = now();
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        run_id: make_run_id(RunKind::Baseline, &data.dataset, spec.arch.name(), config.seed),
        kind: RunKind::Baseline,
        status: RunStatus::Completed,
        dataset: data.dataset.clone(),
        spec: spec.clone(),
        config: RunConfig {
            seed: config.seed,
            split_seed: data.split_seed,
            train: config.clone(),
            stopping: None,
            target_from: None,
        },
        vocab_hash: data.vocab.content_hash(),
        test_hash: data.test_hash.clone(),
        train_size: data.train.len(),
        val_size: data.val.len(),
        test_size: data.test.len(),
        target_accuracy: None,
        cycles: vec![cycle],
        chosen_cycle: None,
        labeled: Vec::new(),
        history: model
            .history
            .iter()
            .map(|e| EpochRecord {
                epoch: e.epoch,
                train_loss: round_to(e.train_loss, 4),
                val_loss: round_to(e.val_loss, 4),
                train_acc: round_to(e.train_acc, 4),
                val_acc: round_to(e.val_acc, 4),
            })
            .collect(),
        created_at: created.clone(),
        updated_at: created,
    };
    if let Some(store) = store {
        store.save(&record)?;
    }
    Ok((record, model))
}
