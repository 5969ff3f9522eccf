//! HTTP/JSON service over the shared request types.
//!
//! Errors are problem documents (`application/problem+json`). Simulation and
//! sensitivity requests run as background jobs when asked with `?mode=async`
//! or when they exceed [`JOB_THRESHOLD`] replicates; jobs live in memory and
//! are lost on restart.

use crate::conduct::TrialStore;
use crate::error::RoseError;
use crate::service::{self, to_json};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use tokio::sync::Semaphore;

/// Total replicates above which a simulation request becomes a job.
pub const JOB_THRESHOLD: u64 = 200_000;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
struct Job {
    status: JobStatus,
    /// Serialized envelope or problem document.
    body: Option<String>,
}

pub struct AppState {
    store: TrialStore,
    jobs: Mutex<HashMap<String, Job>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(store: TrialStore, workers: usize) -> Arc<Self> {
        Arc::new(AppState {
            store,
            jobs: Mutex::new(HashMap::new()),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/design", post(design))
        .route("/v1/oc/exact", post(oc_exact))
        .route("/v1/simulate", post(simulate))
        .route("/v1/sensitivity", post(sensitivity))
        .route("/v1/trials", post(create_trial))
        .route("/v1/trials/{id}", get(show_trial))
        .route("/v1/trials/{id}/responses", post(record))
        .route("/v1/trials/{id}/decision", post(decide))
        .route("/v1/jobs/{id}", get(job))
        .with_state(state)
}

#[derive(Debug, Serialize)]
pub struct Problem {
    #[serde(rename = "type")]
    pub kind: String,
    pub title: String,
    pub status: u16,
    pub detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

pub fn status_of(e: &RoseError) -> StatusCode {
    match e {
        RoseError::Validation(_) | RoseError::Domain(_) => StatusCode::BAD_REQUEST,
        RoseError::Infeasible(_) | RoseError::Unsupported(_) => StatusCode::UNPROCESSABLE_ENTITY,
        RoseError::NotFound(_) => StatusCode::NOT_FOUND,
        RoseError::Conflict(_) | RoseError::NotApplicable(_) | RoseError::InsufficientData(_) => {
            StatusCode::CONFLICT
        }
        RoseError::Numeric(_) | RoseError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn slug(e: &RoseError) -> &'static str {
    match e {
        RoseError::Validation(_) => "validation",
        RoseError::Domain(_) => "domain",
        RoseError::Infeasible(_) => "infeasible",
        RoseError::Numeric(_) => "numeric",
        RoseError::Unsupported(_) => "unsupported",
        RoseError::InsufficientData(_) => "insufficient-data",
        RoseError::NotApplicable(_) => "not-applicable",
        RoseError::NotFound(_) => "not-found",
        RoseError::Conflict(_) => "conflict",
        RoseError::Storage(_) => "storage",
    }
}

pub fn problem(e: &RoseError) -> Problem {
    let status = status_of(e);
    Problem {
        kind: format!("/problems/{}", slug(e)),
        title: status.canonical_reason().unwrap_or("error").to_string(),
        status: status.as_u16(),
        detail: e.to_string(),
        errors: match e {
            RoseError::Validation(v) => v.clone(),
            _ => Vec::new(),
        },
    }
}

fn problem_response(e: &RoseError) -> Response {
    (
        status_of(e),
        [(header::CONTENT_TYPE, "application/problem+json")],
        to_json(&problem(e)),
    )
        .into_response()
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

#[allow(clippy::result_large_err)]
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body)
        .map_err(|e| problem_response(&RoseError::invalid(format!("request body: {e}"))))
}

/// Runs blocking work on the worker pool.
async fn compute<F>(state: &AppState, f: F) -> Result<String, RoseError>
where
    F: FnOnce() -> Result<String, RoseError> + Send + 'static,
{
    let _permit = state
        .workers
        .acquire()
        .await
        .map_err(|e| RoseError::Storage(e.to_string()))?;
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| RoseError::Numeric(format!("worker failed: {e}")))?
}

async fn respond<F>(state: &AppState, status: StatusCode, f: F) -> Response
where
    F: FnOnce() -> Result<String, RoseError> + Send + 'static,
{
    match compute(state, f).await {
        Ok(body) => json_response(status, body),
        Err(e) => problem_response(&e),
    }
}

async fn design(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: service::DesignRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    respond(&st, StatusCode::OK, move || {
        service::run_design(&req).map(|e| to_json(&e))
    })
    .await
}

async fn oc_exact(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: service::OcRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    respond(&st, StatusCode::OK, move || {
        service::run_exact_oc(&req).map(|e| to_json(&e))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ModeQuery {
    mode: Option<String>,
}

fn wants_job(q: &ModeQuery, reps: u64) -> Result<bool, RoseError> {
    match q.mode.as_deref() {
        None => Ok(reps > JOB_THRESHOLD),
        Some("async") => Ok(true),
        Some("sync") => Ok(false),
        Some(m) => Err(RoseError::invalid(format!(
            "mode must be 'sync' or 'async', got '{m}'"
        ))),
    }
}

async fn maybe_job<F>(st: Arc<AppState>, job: bool, f: F) -> Response
where
    F: FnOnce() -> Result<String, RoseError> + Send + 'static,
{
    if !job {
        return respond(&st, StatusCode::OK, f).await;
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    st.jobs.lock().unwrap().insert(
        id.clone(),
        Job {
            status: JobStatus::Queued,
            body: None,
        },
    );
    let bg = st.clone();
    let job_id = id.clone();
    tokio::spawn(async move {
        let permit = bg.workers.clone().acquire_owned().await;
        if let Some(j) = bg.jobs.lock().unwrap().get_mut(&job_id) {
            j.status = JobStatus::Running;
        }
        let out = tokio::task::spawn_blocking(f).await;
        drop(permit);
        let (status, body) = match out {
            Ok(Ok(body)) => (JobStatus::Done, body),
            Ok(Err(e)) => (JobStatus::Failed, to_json(&problem(&e))),
            Err(e) => (
                JobStatus::Failed,
                to_json(&problem(&RoseError::Numeric(format!("worker failed: {e}")))),
            ),
        };
        bg.jobs.lock().unwrap().insert(
            job_id,
            Job {
                status,
                body: Some(body),
            },
        );
    });
    let body = serde_json::json!({ "job_id": id, "status": "queued", "location": format!("/v1/jobs/{id}") });
    let headers = [
        (header::CONTENT_TYPE, "application/json".to_string()),
        (header::LOCATION, format!("/v1/jobs/{id}")),
    ];
    (StatusCode::ACCEPTED, headers, body.to_string()).into_response()
}

async fn simulate(
    State(st): State<Arc<AppState>>,
    Query(q): Query<ModeQuery>,
    body: Bytes,
) -> Response {
    let req: service::SimulateRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let scenarios = if req.true_p_low.is_some() { 1 } else { 2 };
    let job = match wants_job(&q, u64::from(req.n_reps) * scenarios) {
        Ok(j) => j,
        Err(e) => return problem_response(&e),
    };
    maybe_job(st, job, move || {
        service::run_simulate(&req).map(|e| to_json(&e))
    })
    .await
}

async fn sensitivity(
    State(st): State<Arc<AppState>>,
    Query(q): Query<ModeQuery>,
    body: Bytes,
) -> Response {
    let req: service::SensitivityRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let points = match &req.kind {
        service::SensitivityKind::PHigh { true_p_high_grid } => true_p_high_grid.len(),
        service::SensitivityKind::NDeviation { offsets, .. } => offsets.len(),
    };
    let job = match wants_job(&q, u64::from(req.n_reps) * 2 * points as u64) {
        Ok(j) => j,
        Err(e) => return problem_response(&e),
    };
    maybe_job(st, job, move || {
        service::run_sensitivity(&req).map(|e| to_json(&e))
    })
    .await
}

async fn job(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some(j) = st.jobs.lock().unwrap().get(&id).cloned() else {
        return problem_response(&RoseError::NotFound(format!("job {id}")));
    };
    let status = to_json(&j.status);
    let body = match (&j.status, j.body) {
        (JobStatus::Done, Some(b)) => {
            format!(r#"{{"job_id":"{id}","status":{status},"result":{b}}}"#)
        }
        (JobStatus::Failed, Some(b)) => {
            format!(r#"{{"job_id":"{id}","status":{status},"problem":{b}}}"#)
        }
        _ => format!(r#"{{"job_id":"{id}","status":{status}}}"#),
    };
    json_response(StatusCode::OK, body)
}

async fn create_trial(State(st): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: service::CreateTrialRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let bg = st.clone();
    respond(&st, StatusCode::CREATED, move || {
        service::create_trial(&bg.store, &req).map(|e| to_json(&e))
    })
    .await
}

async fn show_trial(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match service::show_trial(&st.store, &id) {
        Ok(e) => json_response(StatusCode::OK, to_json(&e)),
        Err(e) => problem_response(&e),
    }
}

async fn record(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let req: service::RecordRequest = match parse(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    match service::record(&st.store, &id, &req) {
        Ok(e) => json_response(StatusCode::OK, to_json(&e)),
        Err(e) => problem_response(&e),
    }
}

async fn decide(State(st): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let req: service::DecisionRequest = if body.is_empty() {
        service::DecisionRequest {
            expected_version: None,
            analysis: None,
        }
    } else {
        match parse(&body) {
            Ok(r) => r,
            Err(r) => return r,
        }
    };
    match service::decide(&st.store, &id, &req) {
        Ok(e) => json_response(StatusCode::OK, to_json(&e)),
        Err(e) => problem_response(&e),
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
