use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AnnotationRequest, AnnotationResult, Annotator, AnnotatorError, Source};
use crate::textprep::{Label, LabelSet};

const QUEUE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Resolved { label: Label },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub sample_id: String,
    pub text: String,
    pub label_set: LabelSet,
    pub status: TaskStatus,
}

/// What the labeling client sees: never the gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub text: String,
    pub label_set: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueueError {
    #[error("no task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` is already labeled")]
    AlreadyResolved(String),
    #[error("label `{label}` is not one of {allowed:?}")]
    InvalidLabel { label: String, allowed: Vec<String> },
    #[error("queue storage: {0}")]
    Storage(String),
}

#[derive(Serialize, Deserialize)]
struct QueueFile {
    schema_version: u32,
    tasks: Vec<Task>,
}

#[derive(Default)]
struct State {
    tasks: Vec<Task>,
    cancelled: bool,
}

/// Pending labeling tasks shared between service handlers (producers of
/// labels) and the active-learning loop (the single consumer). Every change
/// is written through to the backing file before it becomes visible.
pub struct TaskQueue {
    path: Option<PathBuf>,
    state: Mutex<State>,
    changed: Condvar,
}

impl TaskQueue {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            state: Mutex::new(State::default()),
            changed: Condvar::new(),
        }
    }

    /// Opens or creates the queue persisted at `path`.
    pub fn open(path: &Path) -> Result<Self, QueueError> {
        let tasks = if path.exists() {
            let bytes = std::fs::read(path).map_err(|e| QueueError::Storage(e.to_string()))?;
            let file: QueueFile = serde_json::from_slice(&bytes).map_err(|e| QueueError::Storage(e.to_string()))?;
            if file.schema_version != QUEUE_SCHEMA_VERSION {
                return Err(QueueError::Storage(format!("unsupported schema {}", file.schema_version)));
            }
            file.tasks
        } else {
            Vec::new()
        };
        Ok(Self {
            path: Some(path.to_owned()),
            state: Mutex::new(State { tasks, cancelled: false }),
            changed: Condvar::new(),
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn persist(&self, tasks: &[Task]) -> Result<(), QueueError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let file = QueueFile {
            schema_version: QUEUE_SCHEMA_VERSION,
            tasks: tasks.to_vec(),
        };
        let bytes = serde_json::to_vec_pretty(&file).map_err(|e| QueueError::Storage(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| QueueError::Storage(e.to_string()))
    }

    /// Adds a pending task per request. A request whose sample already has
    /// a task (pending or resolved) reuses it, so re-running an interrupted
    /// cycle does not ask for the same label twice.
    pub fn enqueue(&self, requests: &[AnnotationRequest]) -> Result<Vec<String>, QueueError> {
        let mut state = self.lock();
        let mut tasks = state.tasks.clone();
        let mut ids = Vec::with_capacity(requests.len());
        for r in requests {
            if !tasks.iter().any(|t| t.task_id == r.sample_id) {
                tasks.push(Task {
                    task_id: r.sample_id.clone(),
                    sample_id: r.sample_id.clone(),
                    text: r.raw_text.clone(),
                    label_set: r.label_set.clone(),
                    status: TaskStatus::Pending,
                });
            }
            ids.push(r.sample_id.clone());
        }
        self.persist(&tasks)?;
        state.tasks = tasks;
        self.changed.notify_all();
        Ok(ids)
    }

    /// Pending tasks ordered by id.
    pub fn pending(&self) -> Vec<TaskView> {
        let mut out: Vec<TaskView> = self
            .lock()
            .tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Pending)
            .map(|t| TaskView {
                task_id: t.task_id.clone(),
                text: t.text.clone(),
                label_set: t.label_set.names(),
            })
            .collect();
        out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        out
    }

    pub fn pending_count(&self) -> usize {
        self.lock().tasks.iter().filter(|t| t.status == TaskStatus::Pending).count()
    }

    pub fn task(&self, task_id: &str) -> Option<Task> {
        self.lock().tasks.iter().find(|t| t.task_id == task_id).cloned()
    }

    /// Resolves one pending task. The label must name a member of the
    /// task's label set (case-insensitive).
    pub fn resolve(&self, task_id: &str, label: &str) -> Result<Label, QueueError> {
        let mut state = self.lock();
        let pos = state
            .tasks
            .iter()
            .position(|t| t.task_id == task_id)
            .ok_or_else(|| QueueError::UnknownTask(task_id.to_owned()))?;
        let task = &state.tasks[pos];
        if task.status != TaskStatus::Pending {
            return Err(QueueError::AlreadyResolved(task_id.to_owned()));
        }
        let parsed = label
            .parse::<Label>()
            .ok()
            .filter(|l| task.label_set.contains(*l))
            .ok_or_else(|| QueueError::InvalidLabel {
                label: label.to_owned(),
                allowed: task.label_set.names(),
            })?;
        let mut tasks = state.tasks.clone();
        tasks[pos].status = TaskStatus::Resolved { label: parsed };
        self.persist(&tasks)?;
        state.tasks = tasks;
        self.changed.notify_all();
        Ok(parsed)
    }

    /// Blocks until every listed task is resolved or the queue is cancelled.
    pub fn wait_for(&self, task_ids: &[String]) -> Result<Vec<Label>, AnnotatorError> {
        let mut state = self.lock();
        loop {
            if state.cancelled {
                return Err(AnnotatorError::Cancelled);
            }
            let mut labels = Vec::with_capacity(task_ids.len());
            for id in task_ids {
                match state.tasks.iter().find(|t| &t.task_id == id) {
                    Some(Task {
                        status: TaskStatus::Resolved { label },
                        ..
                    }) => labels.push(*label),
                    Some(_) => break,
                    None => return Err(AnnotatorError::Queue(format!("no task `{id}`"))),
                }
            }
            if labels.len() == task_ids.len() {
                return Ok(labels);
            }
            state = self
                .changed
                .wait_timeout(state, Duration::from_millis(500))
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    /// Wakes every waiter with [`AnnotatorError::Cancelled`]. Pending tasks
    /// stay on disk for a later resume.
    pub fn cancel(&self) {
        self.lock().cancelled = true;
        self.changed.notify_all();
    }

    pub fn is_cancelled(&self) -> bool {
        self.lock().cancelled
    }
}

/// Hands requests to a [`TaskQueue`] and blocks until people label them.
#[derive(Clone)]
pub struct HumanAnnotator {
    queue: Arc<TaskQueue>,
}

impl HumanAnnotator {
    pub fn new(queue: Arc<TaskQueue>) -> Self {
        Self { queue }
    }

    pub fn queue(&self) -> &Arc<TaskQueue> {
        &self.queue
    }
}

impl Annotator for HumanAnnotator {
    fn source(&self) -> Source {
        Source::Human
    }

    fn annotate(&self, requests: &[AnnotationRequest]) -> Vec<Result<AnnotationResult, AnnotatorError>> {
        let labels = self
            .queue
            .enqueue(requests)
            .map_err(|e| AnnotatorError::Queue(e.to_string()))
            .and_then(|ids| self.queue.wait_for(&ids));
        match labels {
            Ok(labels) => requests
                .iter()
                .zip(labels)
                .map(|(r, label)| {
                    Ok(AnnotationResult {
                        sample_id: r.sample_id.clone(),
                        label,
                        source: Source::Human,
                        raw_response: None,
                        latency_ms: None,
                    })
                })
                .collect(),
            Err(e) => requests.iter().map(|_| Err(e.clone())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(id: &str) -> AnnotationRequest {
        AnnotationRequest {
            sample_id: id.into(),
            raw_text: format!("نص {id}"),
            label_set: LabelSet::binary(),
        }
    }

    #[test]
    fn labels_posted_from_another_thread_unblock_the_annotator() {
        let queue = Arc::new(TaskQueue::in_memory());
        let annotator = HumanAnnotator::new(queue.clone());
        let worker = std::thread::spawn(move || annotator.annotate(&[req("b"), req("a")]));
        while queue.pending_count() < 2 {
            std::thread::sleep(Duration::from_millis(5));
        }
        let views = queue.pending();
        assert_eq!(views.iter().map(|v| v.task_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(views[0].label_set, ["Negative", "Positive"]);
        queue.resolve("a", "Positive").unwrap();
        queue.resolve("b", "negative").unwrap();
        let out = worker.join().unwrap();
        assert_eq!(out[0].as_ref().unwrap().label, Label::Negative);
        assert_eq!(out[1].as_ref().unwrap().label, Label::Positive);
        assert!(out.iter().all(|r| r.as_ref().unwrap().source == Source::Human));
    }

    #[test]
    fn bad_posts_leave_the_queue_unchanged() {
        let queue = TaskQueue::in_memory();
        queue.enqueue(&[req("a")]).unwrap();
        assert_eq!(queue.resolve("zz", "Positive"), Err(QueueError::UnknownTask("zz".into())));
        assert!(matches!(queue.resolve("a", "Neutral"), Err(QueueError::InvalidLabel { .. })));
        assert_eq!(queue.pending_count(), 1);
        queue.resolve("a", "Positive").unwrap();
        assert_eq!(queue.resolve("a", "Negative"), Err(QueueError::AlreadyResolved("a".into())));
        assert_eq!(queue.task("a").unwrap().status, TaskStatus::Resolved { label: Label::Positive });
    }

    #[test]
    fn pending_tasks_survive_a_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("queue.json");
        {
            let queue = TaskQueue::open(&path).unwrap();
            queue.enqueue(&[req("a"), req("b")]).unwrap();
            queue.resolve("a", "Positive").unwrap();
        }
        let queue = TaskQueue::open(&path).unwrap();
        assert_eq!(queue.pending_count(), 1);
        assert_eq!(queue.pending()[0].task_id, "b");
        // re-enqueueing after the restart reuses both tasks
        queue.enqueue(&[req("a"), req("b")]).unwrap();
        assert_eq!(queue.pending_count(), 1);
    }

    #[test]
    fn cancel_releases_a_blocked_annotator() {
        let queue = Arc::new(TaskQueue::in_memory());
        let annotator = HumanAnnotator::new(queue.clone());
        let worker = std::thread::spawn(move || annotator.annotate(&[req("a")]));
        while queue.pending_count() < 1 {
            std::thread::sleep(Duration::from_millis(5));
        }
        queue.cancel();
        assert_eq!(worker.join().unwrap(), vec![Err(AnnotatorError::Cancelled)]);
        assert_eq!(queue.pending_count(), 1);
    }
}
