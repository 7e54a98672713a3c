use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::baseline::{check_spec, fit};
use super::data::{prepare, PoolItem, PreparedData};
use super::record::{
    make_run_id, now, CycleRecord, LabelEntry, RunConfig, RunKind, RunRecord, RunStatus, RunStore, SCHEMA_VERSION,
};
use super::OrchestratorError;
use crate::annotators::{AnnotationRequest, Annotator, AnnotatorError};
use crate::models::{evaluate, round_to, ModelSpec, TrainConfig};
use crate::nn::{derive_seed, RngStream};
use crate::textprep::{Dataset, EncodedSample, Label, LabelSet};
use crate::uncertainty::{score_pool, select_batch};

const SEED_SOURCE: &str = "seed";
const FALLBACK_SOURCE: &str = "fallback";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_cycles: usize,
    pub batch_size: usize,
    pub seed_size: usize,
    /// Accuracy the run tries to match, normally the baseline's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    /// End the run at the first cycle that matches the target instead of
    /// running to `max_cycles`.
    #[serde(default)]
    pub stop_at_target: bool,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_cycles: 25,
            batch_size: 50,
            seed_size: 50,
            target_accuracy: None,
            stop_at_target: false,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.max_cycles == 0 || self.batch_size == 0 || self.seed_size == 0 {
            return Err(OrchestratorError::InvalidArgument(
                "max_cycles, batch_size and seed_size must be at least 1".into(),
            ));
        }
        if self.target_accuracy.is_some_and(|t| !(0.0..=1.0).contains(&t)) {
            return Err(OrchestratorError::InvalidArgument("target_accuracy must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub sample: EncodedSample,
    pub label: Label,
    pub source: String,
    pub flagged: bool,
    /// Cycle that added the label; 0 for the seed set.
    pub cycle: usize,
}

/// Labeled and unlabeled halves of the training split plus the fixed
/// evaluation splits. Pool items carry no labels.
#[derive(Debug, Clone)]
pub struct PoolState {
    pub labeled: Vec<LabeledItem>,
    pub unlabeled: Vec<PoolItem>,
    pub val: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
    pub test_hash: String,
    pub label_set: LabelSet,
    /// Cycles completed so far.
    pub cycle: usize,
}

impl PoolState {
    pub fn label_entries(&self) -> Vec<LabelEntry> {
        self.labeled
            .iter()
            .map(|l| LabelEntry {
                sample_id: l.sample.id.clone(),
                label: l.label,
                source: l.source.clone(),
                cycle: l.cycle,
                flagged: l.flagged,
            })
            .collect()
    }

    /// Most frequent label held so far; ties go to the earlier label in
    /// the label set.
    pub fn majority_label(&self) -> Label {
        let mut counts = vec![0usize; self.label_set.len()];
        for l in &self.labeled {
            counts[l.sample.label_index] += 1;
        }
        let best = counts
            .iter()
            .enumerate()
            .fold(0, |best, (i, &c)| if c > counts[best] { i } else { best });
        self.label_set.labels()[best]
    }

    /// Labeled and unlabeled ids are disjoint and together cover `train_ids`.
    pub fn check_conservation(&self, train_ids: &[&str]) -> Result<(), OrchestratorError> {
        let mut seen = HashSet::new();
        let all = self
            .labeled
            .iter()
            .map(|l| l.sample.id.as_str())
            .chain(self.unlabeled.iter().map(|p| p.id.as_str()));
        for id in all {
            if !seen.insert(id) {
                return Err(OrchestratorError::Integrity(format!("sample `{id}` is both labeled and pooled")));
            }
        }
        let train: HashSet<&str> = train_ids.iter().copied().collect();
        if seen != train {
            return Err(OrchestratorError::Integrity(
                "labeled and pooled samples do not partition the training split".into(),
            ));
        }
        Ok(())
    }
}

/// Seeds `rule.seed_size` uniformly drawn training samples with their gold
/// labels and pools the rest. Both halves keep training-split order.
pub fn init_al(data: &PreparedData, rule: &StoppingRule, seed: u64) -> Result<PoolState, OrchestratorError> {
    rule.validate()?;
    if data.train.len() < rule.seed_size {
        return Err(OrchestratorError::DatasetTooSmall {
            needed: rule.seed_size,
            got: data.train.len(),
        });
    }
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    RngStream::new(seed).derive(10).shuffle(&mut order);
    let seeds: HashSet<usize> = order[..rule.seed_size].iter().copied().collect();
    let mut labeled = Vec::with_capacity(rule.seed_size);
    let mut unlabeled = Vec::with_capacity(data.train.len() - rule.seed_size);
    for (i, item) in data.train.iter().enumerate() {
        if seeds.contains(&i) {
            let label = *data
                .train_gold
                .get(&item.id)
                .ok_or_else(|| OrchestratorError::MissingGold(item.id.clone()))?;
            labeled.push(LabeledItem {
                sample: item.encoded(data.label_index(label)?),
                label,
                source: SEED_SOURCE.to_owned(),
                flagged: false,
                cycle: 0,
            });
        } else {
            unlabeled.push(item.clone());
        }
    }
    Ok(PoolState {
        labeled,
        unlabeled,
        val: data.val.clone(),
        test: data.test.clone(),
        test_hash: data.test_hash.clone(),
        label_set: data.label_set.clone(),
        cycle: 0,
    })
}

/// Training seed of one cycle, fixed by the run seed and the cycle number.
pub fn cycle_seed(run_seed: u64, cycle: usize) -> u64 {
    derive_seed(run_seed, 1000 + cycle as u64)
}

/// One AL iteration: train a fresh model on the labeled set, score the
/// pool, annotate the `min(batch_size, |pool|)` most uncertain samples,
/// absorb them and evaluate on test. Unparseable answers fall back to the
/// majority label and are flagged; any other annotator error aborts the
/// cycle and leaves `state` untouched.
pub fn run_cycle(
    state: &PoolState,
    spec: &ModelSpec,
    config: &TrainConfig,
    rule: &StoppingRule,
    annotator: &dyn Annotator,
    run_seed: u64,
) -> Result<(PoolState, CycleRecord), OrchestratorError> {
    let cycle = state.cycle + 1;
    let train_seed = cycle_seed(run_seed, cycle);
    let cfg = TrainConfig {
        seed: train_seed,
        ..config.clone()
    };
    let train_set: Vec<EncodedSample> = state.labeled.iter().map(|l| l.sample.clone()).collect();
    let model = fit(spec, &train_set, &state.val, &cfg)?;

    let mut next = state.clone();
    next.cycle = cycle;
    let mut sources: BTreeMap<String, usize> = BTreeMap::new();
    let mut flagged = 0;
    if !state.unlabeled.is_empty() {
        let pool: Vec<EncodedSample> = state.unlabeled.iter().map(|p| p.encoded(0)).collect();
        let probs = model.predict_proba(&pool)?;
        let ids: Vec<&str> = pool.iter().map(|p| p.id.as_str()).collect();
        let chosen = select_batch(&score_pool(&ids, &probs)?, rule.batch_size);

        let by_id: HashMap<&str, &PoolItem> = state.unlabeled.iter().map(|p| (p.id.as_str(), p)).collect();
        let requests: Vec<AnnotationRequest> = chosen
            .iter()
            .map(|id| AnnotationRequest {
                sample_id: id.clone(),
                raw_text: by_id[id.as_str()].raw_text.clone(),
                label_set: state.label_set.clone(),
            })
            .collect();
        let results = annotator.annotate(&requests);
        if results.len() != requests.len() {
            return Err(OrchestratorError::Integrity(format!(
                "annotator answered {} of {} requests",
                results.len(),
                requests.len()
            )));
        }
        let majority = state.majority_label();
        for (req, result) in requests.iter().zip(results) {
            let (label, source, fallback) = match result {
                Ok(r) if state.label_set.contains(r.label) => (r.label, r.source.name().to_owned(), false),
                Ok(_) | Err(AnnotatorError::UnparseableResponse { .. }) => {
                    (majority, FALLBACK_SOURCE.to_owned(), true)
                }
                Err(error) => {
                    return Err(OrchestratorError::Annotation {
                        sample_id: req.sample_id.clone(),
                        error,
                    })
                }
            };
            if fallback {
                log::warn!("sample {}: unusable annotation, using majority label {}", req.sample_id, label);
                flagged += 1;
            }
            *sources.entry(source.clone()).or_default() += 1;
            let item = by_id[req.sample_id.as_str()];
            next.labeled.push(LabeledItem {
                sample: item.encoded(state.label_set.index_of(label).expect("label checked against the set")),
                label,
                source,
                flagged: fallback,
                cycle,
            });
        }
        let taken: HashSet<&str> = chosen.iter().map(String::as_str).collect();
        next.unlabeled.retain(|p| !taken.contains(p.id.as_str()));
    }

    let metrics = evaluate(&model, &state.test)?;
    let mut record = CycleRecord::with_metrics(cycle, state.labeled.len(), &metrics);
    record.labeled_after = next.labeled.len();
    record.annotation_sources = sources;
    record.flagged_fallbacks = flagged;
    record.best_epoch = model.best_epoch;
    record.train_seed = train_seed;
    record.test_hash = state.test_hash.clone();
    Ok((next, record))
}

/// Earliest cycle whose accuracy, rounded to two decimals, reaches the
/// target rounded the same way.
pub fn find_matching_cycle(record: &RunRecord, target: f64) -> Option<usize> {
    let goal = round_to(target, 2);
    record
        .cycles
        .iter()
        .find(|c| round_to(c.accuracy, 2) >= goal)
        .map(|c| c.cycle)
}

fn rebuild_state(data: &PreparedData, entries: &[LabelEntry], cycle: usize) -> Result<PoolState, OrchestratorError> {
    let by_id: HashMap<&str, &PoolItem> = data.train.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut labeled = Vec::with_capacity(entries.len());
    for e in entries {
        let item = by_id
            .get(e.sample_id.as_str())
            .ok_or_else(|| OrchestratorError::Integrity(format!("labeled sample `{}` is not in the training split", e.sample_id)))?;
        labeled.push(LabeledItem {
            sample: item.encoded(data.label_index(e.label)?),
            label: e.label,
            source: e.source.clone(),
            flagged: e.flagged,
            cycle: e.cycle,
        });
    }
    let taken: HashSet<&str> = entries.iter().map(|e| e.sample_id.as_str()).collect();
    let state = PoolState {
        labeled,
        unlabeled: data.train.iter().filter(|p| !taken.contains(p.id.as_str())).cloned().collect(),
        val: data.val.clone(),
        test: data.test.clone(),
        test_hash: data.test_hash.clone(),
        label_set: data.label_set.clone(),
        cycle,
    };
    let ids: Vec<&str> = data.train.iter().map(|p| p.id.as_str()).collect();
    state.check_conservation(&ids)?;
    Ok(state)
}

/// Checks a baseline record against this run's data: same dataset bytes,
/// split seed and test split.
fn check_baseline(baseline: &RunRecord, data: &PreparedData) -> Result<(), OrchestratorError> {
    if baseline.kind != RunKind::Baseline {
        return Err(OrchestratorError::InvalidArgument(format!("run `{}` is not a baseline", baseline.run_id)));
    }
    if baseline.dataset.content_hash != data.dataset.content_hash {
        return Err(OrchestratorError::Integrity(format!(
            "baseline `{}` was trained on a different dataset",
            baseline.run_id
        )));
    }
    if baseline.test_hash != data.test_hash {
        return Err(OrchestratorError::Integrity(format!(
            "test split differs from baseline `{}`",
            baseline.run_id
        )));
    }
    Ok(())
}

/// Runs AL cycles until `rule.max_cycles`, pool exhaustion (the cycle that
/// starts with an empty pool is the last), or, with `stop_at_target`, the
/// first cycle matching the target. With a store the record is saved before
/// the first cycle and after every cycle, and an unfinished record with the
/// same run id is resumed.
pub fn run_active_learning(
    dataset: &Dataset,
    spec: &ModelSpec,
    config: &RunConfig,
    annotator: &dyn Annotator,
    rule: &StoppingRule,
    store: Option<&RunStore>,
) -> Result<RunRecord, OrchestratorError> {
    rule.validate()?;
    check_spec(spec, dataset.label_set.len())?;
    let data = prepare(dataset, config.split_seed, spec.vocab_size, spec.seq_len)?;
    let mut rule = rule.clone();
    if let (Some(id), Some(store)) = (&config.target_from, store) {
        let baseline = store.load(id)?;
        check_baseline(&baseline, &data)?;
        if rule.target_accuracy.is_none() {
            rule.target_accuracy = baseline.cycles.last().map(|c| c.accuracy);
        }
    }
    let config = RunConfig {
        stopping: Some(rule.clone()),
        ..config.clone()
    };
    let kind = RunKind::for_source(annotator.source());
    let run_id = make_run_id(kind, &data.dataset, spec.arch.name(), config.seed);

    let existing = match store {
        Some(s) if s.exists(&run_id) => Some(s.load(&run_id)?),
        _ => None,
    };
    let (mut record, mut state) = match existing {
        Some(record) => {
            if record.dataset != data.dataset || &record.spec != spec || record.config != config {
                return Err(OrchestratorError::Integrity(format!(
                    "run `{run_id}` exists with a different dataset, model or config"
                )));
            }
            if record.status == RunStatus::Completed {
                return Ok(record);
            }
            log::info!("resuming {run_id} after cycle {}", record.cycles.len());
            let state = rebuild_state(&data, &record.labeled, record.cycles.len())?;
            (record, state)
        }
        None => {
            let state = init_al(&data, &rule, config.seed)?;
            let created = now();
            let record = RunRecord {
                schema_version: SCHEMA_VERSION,
                run_id,
                kind,
                status: RunStatus::Running,
                dataset: data.dataset.clone(),
                spec: spec.clone(),
                config: config.clone(),
                vocab_hash: data.vocab.content_hash(),
                test_hash: data.test_hash.clone(),
                train_size: data.train.len(),
                val_size: data.val.len(),
                test_size: data.test.len(),
                target_accuracy: rule.target_accuracy,
                cycles: Vec::new(),
                chosen_cycle: None,
                labeled: state.label_entries(),
                history: Vec::new(),
                created_at: created.clone(),
                updated_at: created,
            };
            if let Some(store) = store {
                store.save(&record)?;
            }
            (record, state)
        }
    };

    let train_ids: Vec<&str> = data.train.iter().map(|p| p.id.as_str()).collect();
    while state.cycle < rule.max_cycles {
        let exhausted = state.unlabeled.is_empty();
        let (next, cycle) = run_cycle(&state, spec, &config.train, &rule, annotator, config.seed)?;
        next.check_conservation(&train_ids)?;
        log::info!(
            "{}: cycle {} trained on {} labels, accuracy {:.4}",
            record.run_id,
            cycle.cycle,
            cycle.label_count,
            cycle.accuracy
        );
        state = next;
        record.cycles.push(cycle);
        record.labeled = state.label_entries();
        record.chosen_cycle = rule.target_accuracy.and_then(|t| find_matching_cycle(&record, t));
        record.touch();
        if let Some(store) = store {
            store.save(&record)?;
        }
        if exhausted || (rule.stop_at_target && record.chosen_cycle.is_some()) {
            break;
        }
    }
    record.status = RunStatus::Completed;
    record.touch();
    if let Some(store) = store {
        store.save(&record)?;
    }
    Ok(record)
}
