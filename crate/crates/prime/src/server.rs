//! Session-scoped HTTP API over the analysis workflow.
//!
//! A session walks the steps filter, correlation, prune and train. Each
//! step requires the one before it (409 otherwise) and re-running a step
//! discards everything after it. Training runs on a blocking worker and is
//! polled through `/results`.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use prime_core::error::PrimeError;
use prime_core::features::{AlignedDataset, CorrelationMatrix, PruningReport};
use prime_core::report::{OutputSet, ReportBundle};
use prime_core::scoring::ScoreKind;
use prime_core::workflow::{self, FilterParams, Inputs, PruneRequest, ScoreStage, TrainRequest};

pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub ttl: Duration,
    /// Directory served for every path the API does not claim.
    pub static_dir: Option<PathBuf>,
    /// Finished training outputs are also written under
    /// `{spill_dir}/{session}/{job}/`.
    pub spill_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            ttl: DEFAULT_TTL,
            static_dir: None,
            spill_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Created,
    Filtered,
    Scored,
    Pruned,
    Trained,
}

#[derive(Debug, Clone)]
enum JobStatus {
    Running,
    Complete { files: Arc<OutputSet>, bundle: Arc<ReportBundle> },
    Failed(ApiError),
}

#[derive(Debug, Clone)]
struct Job {
    id: String,
    request: TrainRequest,
    status: JobStatus,
}

impl Job {
    fn handle(&self, session: &str) -> Value {
        let status = match self.status {
            JobStatus::Running => "running",
            JobStatus::Complete { .. } => "complete",
            JobStatus::Failed(_) => "failed",
        };
        json!({
            "job_id": self.id,
            "status": status,
            "results": format!("/sessions/{session}/results"),
        })
    }
}

#[derive(Debug)]
struct Session {
    label: Option<String>,
    created_at: DateTime<Utc>,
    expires_at: DateTime<Utc>,
    step: Step,
    busy: bool,
    filter: Option<FilterParams>,
    stage: Option<Arc<ScoreStage>>,
    correlation: Option<Arc<CorrelationMatrix>>,
    pruned: Option<Arc<(AlignedDataset, PruningReport)>>,
    job: Option<Job>,
}

impl Session {
    /// Drops every artifact produced after `step`.
    fn reset_to(&mut self, step: Step) {
        if step < Step::Pruned {
            self.pruned = None;
        }
        if step < Step::Scored {
            self.stage = None;
            self.correlation = None;
        }
        self.job = None;
        self.step = step;
    }

    fn mutation_allowed(&self) -> Result<(), ApiError> {
        let training = matches!(self.job, Some(Job { status: JobStatus::Running, .. }));
        if self.busy || training {
            return Err(ApiError::new(StatusCode::CONFLICT, "busy", "step in progress"));
        }
        Ok(())
    }

    fn require(&self, step: Step) -> Result<(), ApiError> {
        if self.step < step {
            let msg = match step {
                Step::Scored => "run the filter step first",
                _ => "an earlier step is incomplete",
            };
            return Err(ApiError::new(StatusCode::CONFLICT, "step_order", msg));
        }
        Ok(())
    }

    fn stage(&self) -> Result<Arc<ScoreStage>, ApiError> {
        self.require(Step::Scored)?;
        self.stage
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "step_order", "run the filter step first"))
    }
}

struct Shared {
    inputs: Arc<Inputs>,
    sessions: Mutex<HashMap<String, Session>>,
    config: ServerConfig,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(inputs: Inputs, config: ServerConfig) -> Self {
        AppState(Arc::new(Shared {
            inputs: Arc::new(inputs),
            sessions: Mutex::new(HashMap::new()),
            config,
        }))
    }

    fn sessions(&self) -> MutexGuard<'_, HashMap<String, Session>> {
        self.0.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut sessions = self.sessions();
        let session = sessions
            .get_mut(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`")))?;
        if Utc::now() >= session.expires_at {
            return Err(ApiError::new(StatusCode::GONE, "expired", format!("session `{id}` has expired")));
        }
        f(session)
    }
}

/// JSON error body: `{"error": code, "message": text, "field": name?}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<PrimeError> for ApiError {
    fn from(e: PrimeError) -> Self {
        let message = e.to_string();
        match e {
            PrimeError::InvalidParameter { field, .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message).field(field)
            }
            PrimeError::UnknownHazardType(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message).field("hazard_types")
            }
            PrimeError::Io { .. } | PrimeError::Csv(_) | PrimeError::Json(_) | PrimeError::Geometry(_) => {
                ApiError::internal(message)
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "data", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(field) = self.field {
            body["field"] = Value::String(field);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Syntax errors are 400; well-formed JSON of the wrong shape is 422 naming
/// the offending field.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            return ApiError::new(StatusCode::BAD_REQUEST, "malformed", inner.to_string());
        }
        let message = inner.to_string();
        let field = if path != "." {
            Some(path)
        } else {
            message
                .strip_prefix("missing field `")
                .and_then(|rest| rest.split('`').next())
                .map(str::to_owned)
        };
        let err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message);
        match field {
            Some(f) => err.field(f),
            None => err,
        }
    })
}

fn new_token() -> String {
    format!("{:032x}", rand::random::<u128>())
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/dataset", get(dataset_info))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_status).delete(delete_session))
        .route("/sessions/{id}/filter", post(filter))
        .route("/sessions/{id}/scores.csv", get(scores_csv))
        .route("/sessions/{id}/layers/{file}", get(layer))
        .route("/sessions/{id}/correlation", get(correlation))
        .route("/sessions/{id}/prune", post(prune))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/results", get(results))
        .route("/sessions/{id}/results/{*path}", get(result_file));
    let api = match &state.0.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

async fn dataset_info(State(state): State<AppState>) -> Json<Value> {
    let inputs = &state.0.inputs;
    Json(json!({
        "coverage": inputs.coverage(),
        "hazard_types": inputs.hazard_types(),
        "regions": inputs.population.iter().map(|(r, _, _)| r).collect::<std::collections::BTreeSet<_>>().len(),
        "features": inputs.socio.indicators(),
        "geometry": inputs.geometry.is_some(),
        "hazard_report": inputs.hazard_report,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    label: Option<String>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        parse_body(&body)?
    };
    let ttl = state.0.config.ttl;
    let created_at = Utc::now();
    let expires_at = created_at + chrono::Duration::from_std(ttl).unwrap_or(chrono::Duration::MAX);
    let id = new_token();
    let mut sessions = state.sessions();
    // Forget sessions that expired more than one TTL ago; recently expired
    // ones stay to answer 410.
    sessions.retain(|_, s| s.expires_at + chrono::Duration::from_std(ttl).unwrap_or_default() > created_at);
    sessions.insert(
        id.clone(),
        Session {
            label: req.label.clone(),
            created_at,
            expires_at,
            step: Step::Created,
            busy: false,
            filter: None,
            stage: None,
            correlation: None,
            pruned: None,
            job: None,
        },
    );
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "session_id": id,
            "state": Step::Created,
            "label": req.label,
            "created_at": created_at.to_rfc3339(),
            "expires_at": expires_at.to_rfc3339(),
        })),
    ))
}

async fn session_status(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    state.with_session(&id, |s| {
        Ok(Json(json!({
            "session_id": id,
            "label": s.label,
            "state": s.step,
            "busy": s.busy,
            "filter": s.filter,
            "job": s.job.as_ref().map(|j| j.handle(&id)),
            "created_at": s.created_at.to_rfc3339(),
            "expires_at": s.expires_at.to_rfc3339(),
        })))
    })
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    state.with_session(&id, |s| s.mutation_allowed())?;
    state.sessions().remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize)]
struct ScoreStats {
    min: f64,
    max: f64,
    mean: f64,
}

fn filter_summary(id: &str, stage: &ScoreStage) -> Value {
    let stats: BTreeMap<&str, ScoreStats> = ScoreKind::ALL
        .into_iter()
        .map(|k| {
            let vals: Vec<f64> = stage.run.scores.iter().map(|s| s.score(k)).collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (k.as_str(), ScoreStats { min, max, mean })
        })
        .collect();
    let layers: BTreeMap<&str, String> = match &stage.layers {
        Some(l) => l
            .layers
            .iter()
            .map(|(k, _)| (k.as_str(), format!("/sessions/{id}/layers/{}.geojson", k.as_str())))
            .collect(),
        None => BTreeMap::new(),
    };
    let mut warnings = stage.class_warnings.clone();
    warnings.extend(stage.run.incomplete.iter().map(|i| format!("{} {}: {}", i.region_code, i.year, i.reason)));
    if stage.layers.is_none() {
        warnings.push("no geometry loaded; map layers unavailable".into());
    }
    json!({
        "session_id": id,
        "state": Step::Scored,
        "filter": stage.filter,
        "rows": stage.run.scores.len(),
        "regions": stage.summaries.len(),
        "events_used": stage.run.events_used,
        "dataset_rows": stage.dataset.n_rows(),
        "features": stage.dataset.feature_names,
        "statistics": stats,
        "layers": layers,
        "missing_geometry": stage.layers.as_ref().map(|l| &l.sidecar),
        "scores_csv": format!("/sessions/{id}/scores.csv"),
        "warnings": warnings,
    })
}

async fn filter(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let params: FilterParams = parse_body(&body)?;
    state.with_session(&id, |s| {
        s.mutation_allowed()?;
        params.validate(&state.0.inputs)?;
        s.reset_to(Step::Filtered);
        s.filter = Some(params.clone());
        s.busy = true;
        Ok(())
    })?;
    let inputs = state.0.inputs.clone();
    let run = tokio::task::spawn_blocking(move || -> Result<_, PrimeError> {
        let stage = workflow::score(&inputs, &params)?;
        let corr = workflow::correlation(&stage)?;
        Ok((stage, corr))
    })
    .await;
    let mut sessions = state.sessions();
    let Some(s) = sessions.get_mut(&id) else {
        return Err(ApiError::new(StatusCode::GONE, "expired", format!("session `{id}` was removed")));
    };
    s.busy = false;
    let (stage, corr) = run.map_err(|e| ApiError::internal(e.to_string()))??;
    let body = filter_summary(&id, &stage);
    s.stage = Some(Arc::new(stage));
    s.correlation = Some(Arc::new(corr));
    s.step = Step::Scored;
    Ok(Json(body))
}

fn text(content_type: &'static str, body: String) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body).into_response()
}

async fn scores_csv(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let stage = state.with_session(&id, |s| s.stage())?;
    let csv = prime_core::report::scores_csv(&stage.run.scores, &stage.classes)?;
    Ok(text("text/csv", csv))
}

async fn layer(State(state): State<AppState>, Path((id, file)): Path<(String, String)>) -> ApiResult<Response> {
    let stage = state.with_session(&id, |s| s.stage())?;
    let layers = stage
        .layers
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", "no geometry loaded"))?;
    if file == "missing_geometry.json" {
        let body = serde_json::to_string(&layers.sidecar).map_err(PrimeError::from)?;
        return Ok(text("application/json", body));
    }
    let (_, geo) = layers
        .layers
        .iter()
        .find(|(k, _)| file.strip_suffix(".geojson") == Some(k.as_str()))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no layer `{file}`")))?;
    Ok(text("application/geo+json", geo.to_string()))
}

async fn correlation(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    state.with_session(&id, |s| {
        let stage = s.stage()?;
        let matrix = s
            .correlation
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "step_order", "run the filter step first"))?;
        let (retained, removed) = match &s.pruned {
            Some(p) => (p.1.retained.clone(), serde_json::to_value(&p.1.removed).map_err(PrimeError::from)?),
            None => (stage.dataset.feature_names.clone(), json!([])),
        };
        Ok(Json(json!({
            "matrix": *matrix,
            "retained": retained,
            "removed": removed,
            "threshold": s.pruned.as_ref().map(|p| p.1.threshold),
        })))
    })
}

async fn prune(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<PruningReport>> {
    let req: PruneRequest = parse_body(&body)?;
    let stage = state.with_session(&id, |s| {
        s.mutation_allowed()?;
        s.stage()
    })?;
    // Pruning is quick; run it inline and hold the lock only to store it.
    let (data, report) = workflow::prune(&stage.dataset, &req)?;
    state.with_session(&id, |s| {
        s.mutation_allowed()?;
        s.reset_to(Step::Pruned);
        s.pruned = Some(Arc::new((data, report.clone())));
        Ok(())
    })?;
    Ok(Json(report))
}

struct JobInput {
    stage: Arc<ScoreStage>,
    pruned: Option<Arc<(AlignedDataset, PruningReport)>>,
    correlation: Arc<CorrelationMatrix>,
}

async fn train(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: TrainRequest = parse_body(&body)?;
    req.validate()?;
    let started = state.with_session(&id, |s| {
        if let Some(job) = &s.job {
            if job.request == req && !matches!(job.status, JobStatus::Failed(_)) {
                let code = match job.status {
                    JobStatus::Running => StatusCode::ACCEPTED,
                    _ => StatusCode::OK,
                };
                return Ok(Err((code, job.handle(&id))));
            }
        }
        s.mutation_allowed()?;
        let stage = s.stage()?;
        let correlation = s
            .correlation
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "step_order", "run the filter step first"))?;
        let job = Job {
            id: new_token(),
            request: req.clone(),
            status: JobStatus::Running,
        };
        let handle = job.handle(&id);
        s.step = if s.pruned.is_some() { Step::Pruned } else { Step::Scored };
        let input = JobInput {
            stage,
            pruned: s.pruned.clone(),
            correlation,
        };
        let job_id = job.id.clone();
        s.job = Some(job);
        Ok(Ok((handle, input, job_id)))
    })?;
    let (handle, input, job_id) = match started {
        Ok(v) => v,
        Err((code, handle)) => return Ok((code, Json(handle))),
    };
    let worker = state.clone();
    let sid = id.clone();
    tokio::spawn(async move {
        let shared = worker.0.clone();
        let req2 = req.clone();
        let result = tokio::task::spawn_blocking(move || {
            crate::run_training(
                &shared.inputs,
                &input.stage,
                &input.correlation,
                input.pruned.as_deref(),
                &req2,
            )
        })
        .await;
        let status = match result {
            Ok(Ok((files, bundle))) => {
                if let Some(dir) = &worker.0.config.spill_dir {
                    if let Err(e) = files.write_to(&dir.join(&sid).join(&job_id)) {
                        eprintln!("spill failed for session {sid}: {e}");
                    }
                }
                JobStatus::Complete {
                    files: Arc::new(files),
                    bundle: Arc::new(bundle),
                }
            }
            Ok(Err(e)) => JobStatus::Failed(e.into()),
            Err(e) => JobStatus::Failed(ApiError::internal(e.to_string())),
        };
        let mut sessions = worker.sessions();
        if let Some(s) = sessions.get_mut(&sid) {
            if let Some(job) = s.job.as_mut().filter(|j| j.id == job_id) {
                if matches!(status, JobStatus::Complete { .. }) {
                    s.step = Step::Trained;
                }
                job.status = status;
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(handle)))
}

fn finished_job(s: &Session, id: &str) -> ApiResult<Result<(Arc<OutputSet>, Arc<ReportBundle>), Value>> {
    let job = s
        .job
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "step_order", "no training job submitted"))?;
    match &job.status {
        JobStatus::Running => Ok(Err(job.handle(id))),
        JobStatus::Complete { files, bundle } => Ok(Ok((files.clone(), bundle.clone()))),
        JobStatus::Failed(e) => Err(e.clone()),
    }
}

async fn results(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let done = state.with_session(&id, |s| finished_job(s, &id))?;
    Ok(match done {
        Err(handle) => (StatusCode::ACCEPTED, Json(handle)).into_response(),
        Ok((files, bundle)) => {
            let listing: Vec<String> = files.files.keys().map(|k| format!("/sessions/{id}/results/{k}")).collect();
            let mut body = serde_json::to_value(&*bundle).map_err(PrimeError::from)?;
            body["files"] = json!(listing);
            Json(body).into_response()
        }
    })
}

fn content_type(path: &str) -> &'static str {
    match path.rsplit('.').next() {
        Some("json") => "application/json",
        Some("geojson") => "application/geo+json",
        Some("csv") => "text/csv",
        Some("dot") => "text/vnd.graphviz",
        _ => "text/plain; charset=utf-8",
    }
}

/// Serves one output file exactly as the command line writes it.
async fn result_file(State(state): State<AppState>, Path((id, path)): Path<(String, String)>) -> ApiResult<Response> {
    let done = state.with_session(&id, |s| finished_job(s, &id))?;
    let (files, _) = match done {
        Err(handle) => return Ok((StatusCode::ACCEPTED, Json(handle)).into_response()),
        Ok(v) => v,
    };
    let body = files
        .get(&path)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no result file `{path}`")))?;
    Ok(text(content_type(&path), body.to_owned()))
}

pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
