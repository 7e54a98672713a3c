use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::active::StoppingRule;
use super::OrchestratorError;
use crate::annotators::Source;
use crate::models::{round_to, EpochRecord, MetricsReport, ModelSpec, TrainConfig};
use crate::textprep::Label;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Baseline,
    AlHuman,
    AlLlm,
    AlOracle,
}

impl RunKind {
    pub fn for_source(source: Source) -> Self {
        match source {
            Source::Llm => RunKind::AlLlm,
            Source::Human => RunKind::AlHuman,
            Source::Oracle => RunKind::AlOracle,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RunKind::Baseline => "baseline",
            RunKind::AlHuman => "al_human",
            RunKind::AlLlm => "al_llm",
            RunKind::AlOracle => "al_oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub content_hash: String,
    pub samples: usize,
    pub label_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub split_seed: u64,
    /// Training settings; AL cycles replace the seed with a per-cycle one.
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingRule>,
    /// Baseline run whose accuracy is the AL target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_from: Option<String>,
}

/// One evaluated model. `label_count` is the number of labels that model
/// was trained on; `labeled_after` counts labels once the cycle's selected
/// batch has been absorbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub label_count: usize,
    pub labeled_after: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Vec<Vec<usize>>,
    pub annotation_sources: BTreeMap<String, usize>,
    pub flagged_fallbacks: usize,
    pub best_epoch: usize,
    pub train_seed: u64,
    pub test_hash: String,
}

impl CycleRecord {
    /// Copies metrics rounded to four decimals, the precision the record is
    /// stored and compared at.
    pub fn with_metrics(cycle: usize, label_count: usize, metrics: &MetricsReport) -> Self {
        Self {
            cycle,
            label_count,
            labeled_after: label_count,
            accuracy: round_to(metrics.accuracy, 4),
            precision: round_to(metrics.precision, 4),
            recall: round_to(metrics.recall, 4),
            f1: round_to(metrics.f1, 4),
            confusion: metrics.confusion.clone(),
            annotation_sources: BTreeMap::new(),
            flagged_fallbacks: 0,
            best_epoch: 0,
            train_seed: 0,
            test_hash: String::new(),
        }
    }
}

/// A label held by an AL run. `source` is `seed` for the gold-labeled seed
/// set, otherwise the annotator's source name; `cycle` is 0 for seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub sample_id: String,
    pub label: Label,
    pub source: String,
    pub cycle: usize,
    /// Set when the annotator's answer was unusable and the majority label
    /// was substituted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub kind: RunKind,
    pub status: RunStatus,
    pub dataset: DatasetRef,
    pub spec: ModelSpec,
    pub config: RunConfig,
    pub vocab_hash: String,
    pub test_hash: String,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_accuracy: Option<f64>,
    pub cycles: Vec<CycleRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_cycle: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labeled: Vec<LabelEntry>,
    /// Per-epoch curve of a baseline run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<EpochRecord>,
    pub created_at: String,
    pub updated_at: String,
}

/// Snapshot served to progress pollers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub cycle: usize,
    pub label_count: usize,
    pub last_accuracy: Option<f64>,
    pub pending_tasks: usize,
}

impl RunRecord {
    pub fn progress(&self, pending_tasks: usize) -> Progress {
        let last = self.cycles.last();
        Progress {
            cycle: last.map_or(0, |c| c.cycle),
            label_count: last.map_or(0, |c| c.label_count),
            last_accuracy: last.map(|c| c.accuracy),
            pending_tasks,
        }
    }

    /// The record as JSON with `created_at` and `updated_at` removed, for
    /// replay comparisons.
    pub fn without_timestamps(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("run records serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("created_at");
            obj.remove("updated_at");
        }
        v
    }

    pub fn touch(&mut self) {
        self.updated_at = now();
    }
}

pub(crate) fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Deterministic id from kind, dataset, architecture and seed, so a rerun
/// of the same experiment finds its earlier record.
pub(crate) fn make_run_id(kind: RunKind, dataset: &DatasetRef, arch: &str, seed: u64) -> String {
    let name: String = dataset
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    format!("{}-{}-{}-{}-s{}", kind.name(), name.trim_matches('-'), &dataset.content_hash[..8], arch, seed)
}

/// One JSON document per run, named `<run_id>.json`, inside one directory.
#[derive(Debug, Clone)]
pub struct RunStore {
    dir: PathBuf,
}

impl RunStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, OrchestratorError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| store_err(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, run_id: &str) -> Result<PathBuf, OrchestratorError> {
        let valid = !run_id.is_empty()
            && !run_id.starts_with('.')
            && run_id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c));
        if !valid {
            return Err(OrchestratorError::UnknownRun(run_id.to_owned()));
        }
        Ok(self.dir.join(format!("{run_id}.json")))
    }

    pub fn exists(&self, run_id: &str) -> bool {
        self.path(run_id).is_ok_and(|p| p.is_file())
    }

    /// Writes through a temporary file and a rename, so readers never see a
    /// partial document.
    pub fn save(&self, record: &RunRecord) -> Result<(), OrchestratorError> {
        let path = self.path(&record.run_id)?;
        let tmp = path.with_extension("json.tmp");
        let mut bytes = serde_json::to_vec_pretty(record).map_err(|e| OrchestratorError::Store(e.to_string()))?;
        bytes.push(b'\n');
        let mut f = fs::File::create(&tmp).map_err(|e| store_err(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| store_err(&tmp, e))?;
        f.sync_all().map_err(|e| store_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| store_err(&path, e))
    }

    pub fn load(&self, run_id: &str) -> Result<RunRecord, OrchestratorError> {
        let path = self.path(run_id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(OrchestratorError::UnknownRun(run_id.to_owned()))
            }
            Err(e) => return Err(store_err(&path, e)),
        };
        let value: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|e| OrchestratorError::Store(format!("{}: {e}", path.display())))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            other => {
                return Err(OrchestratorError::Store(format!(
                    "{}: unsupported schema_version {other:?}",
                    path.display()
                )))
            }
        }
        serde_json::from_value(value).map_err(|e| OrchestratorError::Store(format!("{}: {e}", path.display())))
    }

    /// Run ids in the store, sorted.
    pub fn list(&self) -> Result<Vec<String>, OrchestratorError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| store_err(&self.dir, e))? {
            let entry = entry.map_err(|e| store_err(&self.dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                ids.push(id.to_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }
}

fn store_err(path: &Path, e: std::io::Error) -> OrchestratorError {
    OrchestratorError::Store(format!("{}: {e}", path.display()))
}
