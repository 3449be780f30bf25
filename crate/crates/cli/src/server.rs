//! HTTP interface over an [`Engine`].

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use paperlens_core::evaluation::StdMode;
use paperlens_core::ingestion::{looks_like_pdf, IngestError, SourceRef};
use paperlens_core::pipeline::{Engine, PipelineError, ProcessOptions, BROADCAST_MP3};
use paperlens_core::workspace::{PaperRecord, Status};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

const DEFAULT_CONVERSATION: &str = "default";

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    workers: Arc<Semaphore>,
    in_flight: Arc<Mutex<HashSet<String>>>,
    eval: Arc<Mutex<EvalState>>,
}

#[derive(Default)]
enum EvalState {
    #[default]
    Idle,
    Running,
    Failed(StatusCode, String),
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        let workers = engine.config().server.workers.max(1);
        Self {
            engine: Arc::new(engine),
            workers: Arc::new(Semaphore::new(workers)),
            in_flight: Arc::default(),
            eval: Arc::default(),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }
}

/// An error response: status code plus a JSON body.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_ready(record: &PaperRecord) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            body: json!({
                "error": format!("paper {} is {}", record.paper_id, record.status.as_str()),
                "paper_id": record.paper_id,
                "status": record.status.as_str(),
            }),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::UnknownPaper(_) => StatusCode::NOT_FOUND,
            PipelineError::NotReady { paper_id, status } => {
                return Self {
                    status: StatusCode::CONFLICT,
                    body: json!({ "error": e.to_string(), "paper_id": paper_id, "status": status }),
                }
            }
            PipelineError::InvalidConversation(_) => StatusCode::BAD_REQUEST,
            PipelineError::Ingest(IngestError::InvalidSource(_) | IngestError::InvalidPdf(_)) => {
                StatusCode::BAD_REQUEST
            }
            PipelineError::Ingest(IngestError::NotFound(_)) => StatusCode::NOT_FOUND,
            PipelineError::Ingest(IngestError::Network(_)) => StatusCode::BAD_GATEWAY,
            e if e.is_provider_failure() => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking engine work off the async executor.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    F: FnOnce(&Engine) -> Result<T, PipelineError> + Send + 'static,
    T: Send + 'static,
{
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/papers", post(submit_paper).get(list_papers))
        .route("/papers/:id", get(get_paper))
        .route("/papers/:id/summary", get(get_summary))
        .route("/papers/:id/score", get(get_score))
        .route("/papers/:id/blog", get(get_blog))
        .route("/papers/:id/assets/:file", get(get_asset))
        .route("/papers/:id/broadcast.mp3", get(get_broadcast))
        .route("/papers/:id/qa", post(ask))
        .route("/eval/run", post(run_eval))
        .route("/eval/report", get(eval_report));
    if let Some(dir) = ui_dir {
        app = app
            .route("/", get(|| async { Redirect::permanent("/ui/") }))
            .nest_service(
                "/ui",
                ServeDir::new(dir).append_index_html_on_directories(true),
            );
    }
    app.with_state(state)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitRequest {
    arxiv_id: Option<String>,
    /// Base64-encoded PDF bytes.
    upload: Option<String>,
    filename: Option<String>,
}

async fn submit_paper(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let request: SubmitRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let source = match (request.arxiv_id, request.upload) {
        (Some(id), None) => SourceRef::arxiv(&id)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?,
        (None, Some(data)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(data.trim())
                .map_err(|e| {
                    ApiError::new(
                        StatusCode::BAD_REQUEST,
                        format!("upload is not base64: {e}"),
                    )
                })?;
            if !looks_like_pdf(&bytes) {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "upload is not a PDF",
                ));
            }
            let stored = {
                let engine = state.engine.clone();
                tokio::task::spawn_blocking(move || engine.workspace().cache().store(&bytes))
                    .await
                    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
                    .map_err(|e| ApiError::from(PipelineError::from(e)))?
            };
            log::info!(
                "received upload {}",
                request.filename.as_deref().unwrap_or("(unnamed)")
            );
            SourceRef::local(stored.path)
        }
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "give exactly one of arxiv_id or upload",
            ))
        }
    };

    let record = blocking(&state, move |engine| engine.fetch(&source)).await?;
    let id = record.paper_id.clone();
    if record.status != Status::Summarized {
        spawn_processing(&state, id.clone());
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({
            "paper_id": id,
            "status": record.status.as_str(),
            "status_url": format!("/papers/{id}"),
        })),
    )
        .into_response())
}

/// Queues `id` for processing unless it is already queued.
fn spawn_processing(state: &AppState, id: String) {
    if !state.in_flight.lock().unwrap().insert(id.clone()) {
        return;
    }
    let state = state.clone();
    tokio::spawn(async move {
        let permit = state.workers.clone().acquire_owned().await;
        let engine = state.engine.clone();
        let job = id.clone();
        let result =
            tokio::task::spawn_blocking(move || engine.process_id(&job, ProcessOptions::default()))
                .await;
        drop(permit);
        match result {
            Ok(Ok(record)) => log::info!("{id}: {}", record.status.as_str()),
            Ok(Err(e)) => log::warn!("{id}: processing failed: {e}"),
            Err(e) => log::error!("{id}: worker panicked: {e}"),
        }
        state.in_flight.lock().unwrap().remove(&id);
    });
}

async fn list_papers(State(state): State<AppState>) -> Json<Vec<PaperRecord>> {
    Json(state.engine.workspace().records())
}

fn record(state: &AppState, id: &str) -> ApiResult<PaperRecord> {
    state
        .engine
        .workspace()
        .record(id)
        .ok_or_else(|| ApiError::from(PipelineError::UnknownPaper(id.to_string())))
}

/// The record of a paper whose outputs are all written.
fn summarized(state: &AppState, id: &str) -> ApiResult<PaperRecord> {
    let record = record(state, id)?;
    if record.status == Status::Summarized {
        Ok(record)
    } else {
        Err(ApiError::not_ready(&record))
    }
}

async fn get_paper(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<PaperRecord>> {
    record(&state, &id).map(Json)
}

async fn get_summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    summarized(&state, &id)?;
    let summary = blocking(&state, move |e| e.summary(&id)).await?;
    Ok(Json(summary).into_response())
}

async fn get_score(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    summarized(&state, &id)?;
    let score = blocking(&state, move |e| e.score(&id, false)).await?;
    Ok(Json(score).into_response())
}

async fn get_blog(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    summarized(&state, &id)?;
    let blog = blocking(&state, move |e| e.blog(&id, false)).await?;
    Ok((
        [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
        blog,
    )
        .into_response())
}

async fn get_broadcast(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    summarized(&state, &id)?;
    let bytes = blocking(&state, move |e| {
        e.broadcast(&id, false)?;
        Ok(e.workspace().read(&id, BROADCAST_MP3)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "audio/mpeg")], bytes).into_response())
}

async fn get_asset(
    State(state): State<AppState>,
    Path((id, file)): Path<(String, String)>,
) -> ApiResult<Response> {
    let record = record(&state, &id)?;
    let safe = !file.is_empty()
        && file
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !file.starts_with('.');
    if !safe {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("invalid asset name {file:?}"),
        ));
    }
    let name = format!("assets/{file}");
    if !state.engine.workspace().exists(&id, &name) {
        if record.status < Status::Aligned || record.status == Status::Failed {
            return Err(ApiError::not_ready(&record));
        }
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            format!("no asset {file}"),
        ));
    }
    let mime = match file
        .rsplit('.')
        .next()
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    };
    let bytes = blocking(&state, move |e| Ok(e.workspace().read(&id, &name)?)).await?;
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QaRequest {
    question: String,
    history_id: Option<String>,
}

async fn ask(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let request: QaRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    if request.question.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "question is empty"));
    }
    summarized(&state, &id)?;
    let conversation = request
        .history_id
        .unwrap_or_else(|| DEFAULT_CONVERSATION.into());
    let turn = blocking(&state, move |e| {
        e.ask(&id, &conversation, &request.question)
    })
    .await?;
    Ok(Json(turn).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalRequest {
    /// Manifest text: one arXiv id or path per line.
    manifest: String,
    #[serde(default = "default_dataset")]
    dataset: String,
    #[serde(default = "default_trials")]
    n_trials: usize,
    #[serde(default)]
    std_mode: StdMode,
}

fn default_dataset() -> String {
    "benchmark".into()
}

fn default_trials() -> usize {
    3
}

async fn run_eval(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let request: EvalRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    if request.n_trials == 0 {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "n_trials must be positive",
        ));
    }
    {
        let mut eval = state.eval.lock().unwrap();
        if matches!(*eval, EvalState::Running) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "an evaluation is already running",
            ));
        }
        *eval = EvalState::Running;
    }
    let engine = state.engine.clone();
    let eval = state.eval.clone();
    tokio::task::spawn_blocking(move || {
        let result = engine.evaluate(
            &request.manifest,
            &request.dataset,
            request.n_trials,
            request.std_mode,
        );
        *eval.lock().unwrap() = match result {
            Ok(_) => EvalState::Idle,
            Err(e) => {
                log::warn!("evaluation failed: {e}");
                let api = ApiError::from(e);
                EvalState::Failed(
                    api.status,
                    api.body["error"].as_str().unwrap_or_default().to_string(),
                )
            }
        };
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "status": "running", "status_url": "/eval/report" })),
    )
        .into_response())
}

async fn eval_report(State(state): State<AppState>) -> ApiResult<Response> {
    match &*state.eval.lock().unwrap() {
        EvalState::Running => {
            return Err(ApiError {
                status: StatusCode::CONFLICT,
                body: json!({ "error": "evaluation in progress", "status": "running" }),
            })
        }
        EvalState::Failed(status, message) => return Err(ApiError::new(*status, message.clone())),
        EvalState::Idle => {}
    }
    match state.engine.eval_report() {
        Ok(report) => Ok(Json(report).into_response()),
        Err(PipelineError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => Err(
            ApiError::new(StatusCode::NOT_FOUND, "no evaluation has been run"),
        ),
        Err(e) => Err(e.into()),
    }
}

/// Binds `host:port` and serves until the process is stopped.
pub async fn serve(state: AppState, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let server = &state.engine.config().server;
    let listener = tokio::net::TcpListener::bind((server.host.as_str(), server.port)).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir)).await
}
