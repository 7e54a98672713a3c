//! The labeling and run-inspection HTTP API.

use std::sync::Arc;
use std::time::Duration;

use arsent_core::annotators::{AnnotationRequest, HumanAnnotator, TaskQueue};
use arsent_core::models::{Arch, ModelSpec, TrainConfig};
use arsent_core::orchestrator::service::{router, ServiceState};
use arsent_core::orchestrator::{run_active_learning, run_baseline, RunConfig, RunKind, RunStore, StoppingRule};
use arsent_core::synthetic::{generate, SyntheticSpec};
use arsent_core::textprep::LabelSet;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    state: Arc<ServiceState>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path().join("runs")).unwrap();
    let queue = Arc::new(TaskQueue::open(&dir.path().join("tasks.json")).unwrap());
    Fixture {
        _dir: dir,
        state: Arc::new(ServiceState { store, queue }),
    }
}

fn call(state: &Arc<ServiceState>, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
            .unwrap();
        let resp = router(state.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {bytes:?}"));
        (status, value)
    })
}

fn enqueue(queue: &TaskQueue, ids: &[&str]) {
    let requests: Vec<_> = ids
        .iter()
        .map(|id| AnnotationRequest {
            sample_id: (*id).to_owned(),
            raw_text: format!("نص {id}"),
            label_set: LabelSet::ternary(),
        })
        .collect();
    queue.enqueue(&requests).unwrap();
}

#[test]
fn tasks_are_listed_and_resolved_exactly_once() {
    let f = fixture();
    enqueue(&f.state.queue, &["b", "a"]);
    let (status, tasks) = call(&f.state, "GET", "/api/tasks", None);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        tasks,
        json!([
            {"task_id": "a", "text": "نص a", "label_set": ["Negative", "Neutral", "Positive"]},
            {"task_id": "b", "text": "نص b", "label_set": ["Negative", "Neutral", "Positive"]},
        ])
    );

    let (status, body) = call(&f.state, "POST", "/api/tasks/a/label", Some(r#"{"label": "Neutral"}"#));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"task_id": "a", "label": "Neutral"}));
    let (_, tasks) = call(&f.state, "GET", "/api/tasks", None);
    assert_eq!(tasks.as_array().unwrap().len(), 1);

    let (status, body) = call(&f.state, "POST", "/api/tasks/a/label", Some(r#"{"label": "Positive"}"#));
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "already_labeled");

    let (status, body) = call(&f.state, "POST", "/api/tasks/zzz/label", Some(r#"{"label": "Positive"}"#));
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_task");
}

#[test]
fn bad_requests_get_json_errors() {
    let f = fixture();
    enqueue(&f.state.queue, &["a"]);
    let (status, body) = call(&f.state, "POST", "/api/tasks/a/label", Some(r#"{"label": "Sarcastic"}"#));
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "invalid_label");
    assert_eq!(body["allowed"], json!(["Negative", "Neutral", "Positive"]));
    assert!(body["error"].as_str().unwrap().contains("Sarcastic"));

    for bad in ["{", r#"{"lable": "Positive"}"#, r#"{"label": 3}"#, ""] {
        let (status, body) = call(&f.state, "POST", "/api/tasks/a/label", Some(bad));
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(body["code"], "malformed_request");
    }
    let (status, body) = call(&f.state, "GET", "/api/nothing", None);
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
    // still pending after all of that
    assert_eq!(f.state.queue.pending_count(), 1);
}

#[test]
fn runs_progress_and_reports_are_served_from_the_store() {
    let f = fixture();
    let ds = generate(&SyntheticSpec::new(200, 1));
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::preset(Arch::Lstm, 1)
    };
    let record = run_baseline(&ds, &ModelSpec::preset(Arch::Lstm, 2), &config, Some(&f.state.store)).unwrap();
    enqueue(&f.state.queue, &["x", "y"]);

    let (status, body) = call(&f.state, "GET", &format!("/api/run/{}", record.run_id), None);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::to_value(&record).unwrap());

    let (status, body) = call(&f.state, "GET", &format!("/api/run/{}/progress", record.run_id), None);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body,
        json!({"cycle": 1, "label_count": 120, "last_accuracy": record.cycles[0].accuracy, "pending_tasks": 2})
    );

    let (status, body) = call(&f.state, "GET", &format!("/api/report?runs={}", record.run_id), None);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["series"][0]["points"][0]["label_count"], 120);
    assert_eq!(body["baseline_accuracy"], json!(record.cycles[0].accuracy));

    let (status, body) = call(&f.state, "GET", "/api/run/nope", None);
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_run");
    let (status, _) = call(&f.state, "GET", "/api/run/nope/progress", None);
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&f.state, "GET", "/api/report", None);
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

/// A scripted client labels every cycle's tasks with gold answers through
/// the API while the loop blocks on the queue.
#[test]
fn human_cycles_complete_through_the_api() {
    let f = fixture();
    let ds = generate(&SyntheticSpec::new(300, 2));
    let gold: std::collections::HashMap<String, String> = ds
        .samples
        .iter()
        .map(|s| (s.id.clone(), s.gold_label.unwrap().name().to_owned()))
        .collect();
    let rule = StoppingRule {
        max_cycles: 2,
        ..StoppingRule::default()
    };
    let config = RunConfig {
        seed: 2,
        split_seed: 2,
        train: TrainConfig {
            epochs: 2,
            ..TrainConfig::preset(Arch::Lstm, 2)
        },
        stopping: None,
        target_from: None,
    };
    let human = HumanAnnotator::new(f.state.queue.clone());
    let store = f.state.store.clone();
    let driver = std::thread::spawn(move || {
        run_active_learning(&ds, &ModelSpec::preset(Arch::Lstm, 2), &config, &human, &rule, Some(&store))
    });

    let mut answered = 0;
    while !driver.is_finished() {
        let (_, tasks) = call(&f.state, "GET", "/api/tasks", None);
        for t in tasks.as_array().unwrap() {
            let id = t["task_id"].as_str().unwrap();
            let body = json!({"label": gold[id]}).to_string();
            let (status, _) = call(&f.state, "POST", &format!("/api/tasks/{id}/label"), Some(&body));
            assert_eq!(status, StatusCode::OK);
            answered += 1;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    let record = driver.join().unwrap().unwrap();
    assert_eq!(answered, 100);
    assert_eq!(record.kind, RunKind::AlHuman);
    assert_eq!(record.cycles.len(), 2);
    assert!(record.cycles.iter().all(|c| c.annotation_sources.get("human") == Some(&50)));
    let (_, progress) = call(&f.state, "GET", &format!("/api/run/{}/progress", record.run_id), None);
    assert_eq!(progress["cycle"], 2);
    assert_eq!(progress["pending_tasks"], 0);
}
