use serde::{Deserialize, Serialize};

use super::record::{RunKind, RunStore};
use super::OrchestratorError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub cycle: usize,
    pub label_count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub run_id: String,
    pub kind: RunKind,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_cycle: Option<usize>,
    pub points: Vec<SeriesPoint>,
}

/// Plot-ready accuracy series, one per run, with the baseline accuracy as
/// a horizontal reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub series: Vec<Series>,
    /// Accuracy of the first baseline run listed, else the first target
    /// accuracy an AL run recorded.
    pub baseline_accuracy: Option<f64>,
}

impl ComparisonReport {
    /// `run_id,kind,cycle,label_count,accuracy` rows, one per point.
    pub fn to_csv(&self) -> Result<String, OrchestratorError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| OrchestratorError::Store(e.to_string());
        w.write_record(["run_id", "kind", "cycle", "label_count", "accuracy"]).map_err(fail)?;
        for s in &self.series {
            for p in &s.points {
                w.write_record([
                    s.run_id.clone(),
                    s.kind.name().to_owned(),
                    p.cycle.to_string(),
                    p.label_count.to_string(),
                    p.accuracy.to_string(),
                ])
                .map_err(fail)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| OrchestratorError::Store(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}

/// Collects the stored cycles of each run, in the order given.
pub fn report(store: &RunStore, run_ids: &[String]) -> Result<ComparisonReport, OrchestratorError> {
    if run_ids.is_empty() {
        return Err(OrchestratorError::InvalidArgument("report needs at least one run id".into()));
    }
    let records = run_ids.iter().map(|id| store.load(id)).collect::<Result<Vec<_>, _>>()?;
    let baseline_accuracy = records
        .iter()
        .find(|r| r.kind == RunKind::Baseline)
        .and_then(|r| r.cycles.last().map(|c| c.accuracy))
        .or_else(|| records.iter().find_map(|r| r.target_accuracy));
    let series = records
        .into_iter()
        .map(|r| Series {
            points: r
                .cycles
                .iter()
                .map(|c| SeriesPoint {
                    cycle: c.cycle,
                    label_count: c.label_count,
                    accuracy: c.accuracy,
                })
                .collect(),
            run_id: r.run_id,
            kind: r.kind,
            dataset: r.dataset.name,
            chosen_cycle: r.chosen_cycle,
        })
        .collect();
    Ok(ComparisonReport {
        series,
        baseline_accuracy,
    })
}
