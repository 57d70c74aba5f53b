//! HTTP JSON service over a store: review queue, label capture, retraining
//! and served reports.
//!
//! | method | path                          |                                   |
//! |--------|-------------------------------|-----------------------------------|
//! | GET    | `/api/queue`                  | `variant`, optional `item_id`, `limit` |
//! | POST   | `/api/labels`                 | `{comment_id, label, reviewer?}`  |
//! | GET    | `/api/labels`                 | effective review events           |
//! | POST   | `/api/retrain`                | `{variant, seed}`, returns a job id |
//! | GET    | `/api/runs/{id}`              | job or run status                 |
//! | GET    | `/api/runs/{id}/reports`      | table3/4/5 and manifest           |
//! | GET    | `/api/runs/{id}/reports/{file}` | one report file, verbatim       |
//! | GET    | `/api/items/{id}`             | statistics and comments           |
//!
//! Errors are `{"code", "message"}` with 404 for unknown ids, 409 for a busy
//! retrain slot and 422 for invalid input. The reviewer id is taken from the
//! body or the `x-reviewer` header and is not authenticated.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::{self, QueueFilter};
use crate::evaluation::report::{REPORT_MANIFEST, TABLE3_JSON, TABLE4_JSON, TABLE5_JSON};
use crate::evaluation::REPORT_FILES;
use crate::pipeline::Variant;
use crate::store::{Store, RUN_REPORTS_DIR};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Pending { variant: Variant, seed: u64 },
    Complete { variant: Variant, seed: u64, run_id: String },
    Failed { variant: Variant, seed: u64, message: String },
}

pub struct AppState {
    store: Store,
    /// Serializes label appends.
    label_lock: tokio::sync::Mutex<()>,
    /// Holds the id of the running retrain job, if any.
    slot: Mutex<Option<String>>,
    jobs: Mutex<HashMap<String, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(store: Store) -> Arc<Self> {
        Arc::new(AppState {
            store,
            label_lock: tokio::sync::Mutex::new(()),
            slot: Mutex::new(None),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::UnknownItem(_) | Error::UnknownCandidate(_) | Error::UnknownComment(_) => ApiError::not_found(message),
            Error::MissingPrerequisite(_) => Self::new(StatusCode::NOT_FOUND, "missing_prerequisite", message),
            Error::InvalidArgument(_) | Error::InvalidRecord(_) | Error::DimensionMismatch { .. } => {
                ApiError::validation(message)
            }
            Error::InsufficientData(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "insufficient_labels", message),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::validation(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::validation(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> crate::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn parse_variant(s: &str) -> ApiResult<Variant> {
    s.parse().map_err(|e: Error| ApiError::validation(e.to_string()))
}

#[derive(Deserialize)]
struct QueueParams {
    variant: String,
    item_id: Option<String>,
    limit: Option<usize>,
}

async fn get_queue(
    State(state): State<Arc<AppState>>,
    params: std::result::Result<Query<QueueParams>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(params) = params?;
    let filter = QueueFilter {
        variant: parse_variant(&params.variant)?,
        item_id: params.item_id,
        limit: params.limit,
    };
    let store = state.store.clone();
    let entries = blocking(move || commands::queue(&store, &filter)).await?;
    Ok(Json(entries).into_response())
}

#[derive(Deserialize)]
struct LabelBody {
    comment_id: String,
    label: i64,
    reviewer: Option<String>,
}

async fn post_label(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: std::result::Result<Json<LabelBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let label = u8::try_from(body.label)
        .ok()
        .filter(|&l| l <= 1)
        .ok_or_else(|| ApiError::validation(format!("label must be 0 or 1, got {}", body.label)))?;
    let reviewer = body
        .reviewer
        .or_else(|| headers.get("x-reviewer").and_then(|v| v.to_str().ok()).map(str::to_string))
        .unwrap_or_else(|| "anonymous".to_string());
    let _guard = state.label_lock.lock().await;
    let store = state.store.clone();
    let (event, appended) = blocking(move || commands::label(&store, &body.comment_id, label, &reviewer)).await?;
    Ok(Json(json!({"event": event, "appended": appended})).into_response())
}

async fn get_labels(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    let store = state.store.clone();
    let view = blocking(move || store.label_view()).await?;
    Ok(Json(view.into_values().collect::<Vec<_>>()).into_response())
}

#[derive(Deserialize)]
struct RetrainBody {
    variant: String,
    #[serde(default)]
    seed: u64,
}

/// Releases the retrain slot when the job ends, however it ends.
struct SlotGuard(Arc<AppState>);

impl Drop for SlotGuard {
    fn drop(&mut self) {
        *self.0.slot.lock().unwrap() = None;
    }
}

async fn post_retrain(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<RetrainBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let variant = parse_variant(&body.variant)?;
    let seed = body.seed;
    let job_id = {
        let mut slot = state.slot.lock().unwrap();
        if let Some(running) = slot.as_ref() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "busy",
                format!("retrain {running} is still in progress"),
            ));
        }
        let id = format!("job-{}", state.next_job.fetch_add(1, Ordering::SeqCst));
        *slot = Some(id.clone());
        id
    };
    let guard = SlotGuard(state.clone());

    let store = state.store.clone();
    if let Err(e) = blocking(move || commands::check_retrainable(&store)).await {
        drop(guard);
        return Err(e);
    }
    state
        .jobs
        .lock()
        .unwrap()
        .insert(job_id.clone(), JobStatus::Pending { variant, seed });

    let job_state = state.clone();
    let id = job_id.clone();
    tokio::spawn(async move {
        let _guard = guard;
        let store = job_state.store.clone();
        let outcome = tokio::task::spawn_blocking(move || commands::retrain(&store, variant, seed)).await;
        let status = match outcome {
            Ok(Ok(manifest)) => JobStatus::Complete {
                variant,
                seed,
                run_id: manifest.run_id,
            },
            Ok(Err(e)) => JobStatus::Failed {
                variant,
                seed,
                message: e.to_string(),
            },
            Err(e) => JobStatus::Failed {
                variant,
                seed,
                message: e.to_string(),
            },
        };
        log::info!("retrain {id}: {status:?}");
        job_state.jobs.lock().unwrap().insert(id, status);
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"run_id": job_id, "status": "pending"})),
    )
        .into_response())
}

enum Resolved {
    Run(String),
    Job(JobStatus),
}

fn resolve(state: &AppState, id: &str) -> ApiResult<Resolved> {
    if let Some(job) = state.jobs.lock().unwrap().get(id).cloned() {
        return Ok(match job {
            JobStatus::Complete { run_id, .. } => Resolved::Run(run_id),
            other => Resolved::Job(other),
        });
    }
    if state.store.run_exists(id) {
        return Ok(Resolved::Run(id.to_string()));
    }
    Err(ApiError::not_found(format!("unknown run {id:?}")))
}

async fn get_run(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = state.jobs.lock().unwrap().get(&id).cloned();
    match resolve(&state, &id)? {
        Resolved::Job(status) => Ok(Json(json!({"id": id, "job": status, "status": status_name(&status)})).into_response()),
        Resolved::Run(run_id) => {
            let store = state.store.clone();
            let rid = run_id.clone();
            let manifest = blocking(move || store.load_run_manifest(&rid)).await?;
            Ok(Json(json!({
                "id": id,
                "status": "complete",
                "run_id": run_id,
                "job": job,
                "manifest": manifest,
            }))
            .into_response())
        }
    }
}

fn status_name(s: &JobStatus) -> &'static str {
    match s {
        JobStatus::Pending { .. } => "pending",
        JobStatus::Complete { .. } => "complete",
        JobStatus::Failed { .. } => "failed",
    }
}

/// Response for a job that has not produced a run.
fn unfinished(id: &str, status: &JobStatus) -> Response {
    let code = match status {
        JobStatus::Failed { .. } => StatusCode::CONFLICT,
        _ => StatusCode::ACCEPTED,
    };
    (code, Json(json!({"id": id, "status": status_name(status), "job": status}))).into_response()
}

async fn get_reports(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let run_id = match resolve(&state, &id)? {
        Resolved::Job(status) => return Ok(unfinished(&id, &status)),
        Resolved::Run(r) => r,
    };
    let dir = state.store.run_dir(&run_id).join(RUN_REPORTS_DIR);
    let mut body = String::from("{");
    for (i, (key, file)) in [
        ("table3", TABLE3_JSON),
        ("table4", TABLE4_JSON),
        ("table5", TABLE5_JSON),
        ("manifest", REPORT_MANIFEST),
    ]
    .into_iter()
    .enumerate()
    {
        let path = dir.join(file);
        let text = tokio::fs::read_to_string(&path)
            .await
            .map_err(|e| ApiError::from(Error::io(&path, e)))?;
        if i > 0 {
            body.push(',');
        }
        body.push_str(&format!("\"{key}\":{}", text.trim_end()));
    }
    body.push('}');
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn get_report_file(
    State(state): State<Arc<AppState>>,
    Path((id, file)): Path<(String, String)>,
) -> ApiResult<Response> {
    if !REPORT_FILES.contains(&file.as_str()) {
        return Err(ApiError::not_found(format!("unknown report file {file:?}")));
    }
    let run_id = match resolve(&state, &id)? {
        Resolved::Job(status) => return Ok(unfinished(&id, &status)),
        Resolved::Run(r) => r,
    };
    let path = state.store.run_dir(&run_id).join(RUN_REPORTS_DIR).join(&file);
    let bytes = tokio::fs::read(&path).await.map_err(|e| ApiError::from(Error::io(&path, e)))?;
    let content_type = match file.rsplit('.').next() {
        Some("json") => "application/json",
        Some("csv") => "text/csv; charset=utf-8",
        _ => "text/plain; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

async fn get_item(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let store = state.store.clone();
    let detail = blocking(move || commands::item_detail(&store, &id)).await?;
    Ok(Json(detail).into_response())
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/queue", get(get_queue))
        .route("/api/labels", post(post_label).get(get_labels))
        .route("/api/retrain", post(post_retrain))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/reports", get(get_reports))
        .route("/api/runs/{id}/reports/{file}", get(get_report_file))
        .route("/api/items/{id}", get(get_item))
        .fallback(fallback)
        .with_state(state)
}

/// Binds `addr`, reports the bound address through `on_bound` and serves
/// until interrupted.
pub async fn serve(store: Store, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(std::path::Path::new(&addr.to_string()), e))?;
    let local = listener.local_addr().map_err(|e| Error::io(std::path::Path::new("socket"), e))?;
    on_bound(local);
    axum::serve(listener, router(AppState::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(std::path::Path::new(&local.to_string()), e))
}

