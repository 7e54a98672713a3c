//! JSON HTTP API for labeling clients and run inspection.
//!
//! | method | path | reply |
//! |---|---|---|
//! | GET | `/api/tasks` | pending tasks, sorted by id |
//! | POST | `/api/tasks/{id}/label` | `{"label": ...}`; 200, 404 unknown or already labeled, 422 bad label |
//! | GET | `/api/run/{id}` | the stored run record |
//! | GET | `/api/run/{id}/progress` | cycle, label count, last accuracy, pending tasks |
//! | GET | `/api/report?runs=a,b` | accuracy series of the listed runs |
//!
//! Every error reply is `{"error": message, "code": tag}`.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::record::RunStore;
use super::report::report;
use super::OrchestratorError;
use crate::annotators::{QueueError, TaskQueue};

pub struct ServiceState {
    pub store: RunStore,
    pub queue: Arc<TaskQueue>,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    allowed: Option<Vec<String>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            allowed: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.message, "code": self.code});
        if let Some(allowed) = self.allowed {
            body["allowed"] = json!(allowed);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let status = match e {
            OrchestratorError::UnknownRun(_) => StatusCode::NOT_FOUND,
            OrchestratorError::InvalidArgument(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<QueueError> for ApiError {
    fn from(e: QueueError) -> Self {
        let message = e.to_string();
        match e {
            QueueError::UnknownTask(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_task", message),
            QueueError::AlreadyResolved(_) => ApiError::new(StatusCode::NOT_FOUND, "already_labeled", message),
            QueueError::InvalidLabel { allowed, .. } => ApiError {
                allowed: Some(allowed),
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_label", message)
            },
            QueueError::Storage(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    label: String,
}

#[derive(Deserialize)]
struct ReportQuery {
    runs: Option<String>,
}

async fn list_tasks(State(s): State<Arc<ServiceState>>) -> Response {
    Json(s.queue.pending()).into_response()
}

async fn post_label(
    State(s): State<Arc<ServiceState>>,
    Path(task_id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let LabelBody { label } = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", format!("expected {{\"label\": string}}: {e}")))?;
    // resolving writes the queue file, so keep it off the async workers
    let queue = s.queue.clone();
    let id = task_id.clone();
    let resolved = tokio::task::spawn_blocking(move || queue.resolve(&id, &label))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(json!({"task_id": task_id, "label": resolved.name()})).into_response())
}

async fn get_run(State(s): State<Arc<ServiceState>>, Path(run_id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.store.load(&run_id)?).into_response())
}

async fn get_progress(State(s): State<Arc<ServiceState>>, Path(run_id): Path<String>) -> Result<Response, ApiError> {
    let record = s.store.load(&run_id)?;
    Ok(Json(record.progress(s.queue.pending_count())).into_response())
}

async fn get_report(State(s): State<Arc<ServiceState>>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    let ids: Vec<String> = q
        .runs
        .unwrap_or_default()
        .split(',')
        .filter(|id| !id.is_empty())
        .map(str::to_owned)
        .collect();
    Ok(Json(report(&s.store, &ids)?).into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/tasks/{id}/label", post(post_label))
        .route("/api/run/{id}", get(get_run))
        .route("/api/run/{id}/progress", get(get_progress))
        .route("/api/report", get(get_report))
        .fallback(not_found)
        .with_state(state)
}

/// Serves the API on `listener` until `shutdown` completes.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
