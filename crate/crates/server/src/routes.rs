use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use noteforge_core::notegen::assets::{content_type, is_asset_name};
use noteforge_core::notegen::{AssetStore, NoteScheme};
use noteforge_core::pipeline::{self, write_atomic, Stage, ASSETS_DIR, SCHEME_FILE, TRANSCRIPT_FILE};
use noteforge_core::render::canonical::{parse_scheme, serialize_scheme};
use noteforge_core::render::{AssetLinks, Engagement, RenderModality, RenderOptions, Renderer, Verbosity};
use noteforge_core::{Config, Error};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use crate::jobs::{self, JobStatus, UPLOAD_DIR};

const MAX_UPLOAD: usize = 2 << 30;

struct Inner {
    jobs_root: PathBuf,
    config: Config,
    mock: bool,
    static_dir: Option<PathBuf>,
    slots: Arc<Semaphore>,
    edit_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Fails on unusable provider settings unless `mock`.
    pub fn new(jobs_root: PathBuf, config: Config, mock: bool, static_dir: Option<PathBuf>) -> noteforge_core::Result<Self> {
        config.validate()?;
        if !mock {
            pipeline::build_providers(&config, false, None)?;
        }
        std::fs::create_dir_all(&jobs_root)?;
        let slots = Arc::new(Semaphore::new(config.server.max_concurrent_jobs.max(1)));
        Ok(Self(Arc::new(Inner {
            jobs_root,
            config,
            mock,
            static_dir,
            slots,
            edit_locks: Mutex::new(HashMap::new()),
        })))
    }

    fn job_dir(&self, id: &str) -> Result<PathBuf, ApiError> {
        let dir = self.0.jobs_root.join(id);
        if jobs::valid_job_id(id) && dir.join(jobs::STATUS_FILE).is_file() {
            Ok(dir)
        } else {
            Err(ApiError::not_found(format!("no job {id}")))
        }
    }

    fn edit_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.0.edit_locks.lock().unwrap();
        locks.entry(id.to_string()).or_default().clone()
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", message)
    }

    fn not_ready(status: &JobStatus) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "NOT_READY",
            format!("job {} is {}", status.job_id, status.status.as_str()),
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::UnreadableSource(_) => StatusCode::BAD_REQUEST,
            Error::ValidationFailed { .. } | Error::SchemaVersionUnsupported(_) | Error::DanglingReference(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            Error::MissingAsset(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/jobs", axum::routing::post(create_job))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/jobs/{id}/scheme", get(get_scheme).put(put_scheme))
        .route("/api/jobs/{id}/assets/{name}", get(get_asset))
        .route("/api/jobs/{id}/render", get(render))
        .route("/api/jobs/{id}/transcript", get(get_transcript))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD));
    let app = match &state.0.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    };
    app.with_state(state)
}

async fn index() -> Html<&'static str> {
    Html(include_str!("index.html"))
}

#[derive(Deserialize)]
struct SourceBody {
    source: String,
}

#[derive(Deserialize)]
struct UploadQuery {
    filename: Option<String>,
}

/// JSON `{"source": ...}` or a plain-text URL/path names the video; any other body is the video itself.
async fn create_job(
    State(state): State<AppState>,
    Query(q): Query<UploadQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let id = jobs::new_job_id();
    let dir = state.0.jobs_root.join(&id);
    let ctype = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    let named = if ctype.starts_with("application/json") {
        let b: SourceBody = serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "INVALID_ARGUMENT", format!("body: {e}")))?;
        Some(b.source)
    } else if ctype.starts_with("text/plain") {
        Some(String::from_utf8_lossy(&body).trim().to_string())
    } else {
        None
    };
    if body.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "INVALID_ARGUMENT", "empty request body"));
    }
    std::fs::create_dir_all(&dir)?;
    let source = match named {
        Some(s) if s.trim().is_empty() => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "INVALID_ARGUMENT", "empty source"));
        }
        Some(s) => s,
        None => {
            let up = dir.join(UPLOAD_DIR);
            std::fs::create_dir_all(&up)?;
            let path = up.join(jobs::upload_name(q.filename.as_deref()));
            std::fs::write(&path, &body)?;
            path.to_string_lossy().into_owned()
        }
    };
    JobStatus::new(id.clone(), source, state.0.config.clone()).store(&dir)?;
    let slots = state.0.slots.clone();
    let mock = state.0.mock;
    tokio::spawn(async move {
        let _permit = slots.acquire_owned().await.expect("job semaphore open");
        if let Err(e) = tokio::task::spawn_blocking(move || jobs::run_job(dir, mock)).await {
            tracing::error!("job task panicked: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id }))))
}

async fn job_status(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<JobStatus>> {
    let dir = state.job_dir(&id)?;
    Ok(Json(JobStatus::load(&dir)?))
}

/// Directory of a finished job.
fn done_dir(state: &AppState, id: &str) -> ApiResult<PathBuf> {
    let dir = state.job_dir(id)?;
    let status = JobStatus::load(&dir)?;
    if status.status != Stage::Done {
        return Err(ApiError::not_ready(&status));
    }
    Ok(dir)
}

fn json_file(path: &Path) -> ApiResult<Response> {
    let text = std::fs::read_to_string(path)?;
    Ok(([(header::CONTENT_TYPE, "application/json; charset=utf-8")], text).into_response())
}

async fn get_scheme(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    json_file(&done_dir(&state, &id)?.join(SCHEME_FILE))
}

async fn get_transcript(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    json_file(&done_dir(&state, &id)?.join(TRANSCRIPT_FILE))
}

fn load_scheme(dir: &Path) -> ApiResult<NoteScheme> {
    Ok(parse_scheme(&std::fs::read_to_string(dir.join(SCHEME_FILE))?)?)
}

/// First structural difference between `old` and `new`, ignoring summaries and highlights.
pub fn structural_change(old: &NoteScheme, new: &NoteScheme) -> Option<String> {
    let mut probe = new.clone();
    if probe.chapters.len() != old.chapters.len() {
        return Some("chapters".into());
    }
    for (ci, (p, o)) in probe.chapters.iter_mut().zip(&old.chapters).enumerate() {
        p.summary.clone_from(&o.summary);
        if p.steps.len() != o.steps.len() {
            return Some(format!("chapters[{ci}].steps"));
        }
        for (ps, os) in p.steps.iter_mut().zip(&o.steps) {
            ps.summary.clone_from(&os.summary);
        }
    }
    if probe == *old {
        return None;
    }
    for (ci, (p, o)) in probe.chapters.iter().zip(&old.chapters).enumerate() {
        for (si, (ps, os)) in p.steps.iter().zip(&o.steps).enumerate() {
            if ps != os {
                return Some(format!("chapters[{ci}].steps[{si}]"));
            }
        }
        if p != o {
            return Some(format!("chapters[{ci}]"));
        }
    }
    Some("video".into())
}

async fn put_scheme(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: String) -> ApiResult<Response> {
    let dir = done_dir(&state, &id)?;
    let new = parse_scheme(&body)?;
    let lock = state.edit_lock(&id);
    let _guard = lock.lock().await;
    let old = load_scheme(&dir)?;
    if let Some(path) = structural_change(&old, &new) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "STRUCTURAL_EDIT",
            format!("only summaries and highlights may change; `{path}` differs"),
        ));
    }
    let store = AssetStore::open(dir.join(ASSETS_DIR))?;
    if let Some(v) = new.violations(Some(&|n: &str| store.contains(n))).into_iter().next() {
        return Err(Error::ValidationFailed {
            path: v.path,
            message: v.message,
        }
        .into());
    }
    let text = serialize_scheme(&new);
    write_atomic(&dir.join(SCHEME_FILE), text.as_bytes())?;
    Ok(([(header::CONTENT_TYPE, "application/json; charset=utf-8")], text).into_response())
}

async fn get_asset(State(state): State<AppState>, UrlPath((id, name)): UrlPath<(String, String)>) -> ApiResult<Response> {
    let dir = state.job_dir(&id)?;
    if !is_asset_name(&name) {
        return Err(ApiError::not_found(format!("no asset {name}")));
    }
    let bytes = AssetStore::open(dir.join(ASSETS_DIR))?.read(&name)?;
    Ok((
        [
            (header::CONTENT_TYPE, content_type(&name)),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Deserialize)]
struct RenderQuery {
    modality: Option<String>,
    verbosity: Option<String>,
    engagement: Option<String>,
    show_emoji: Option<bool>,
    #[serde(default)]
    inline: bool,
}

fn opt<T: std::str::FromStr<Err = Error>>(v: Option<&str>, default: T) -> ApiResult<T> {
    match v.filter(|s| !s.is_empty()) {
        Some(s) => Ok(s.parse()?),
        None => Ok(default),
    }
}

async fn render(State(state): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<RenderQuery>) -> ApiResult<Html<String>> {
    let dir = done_dir(&state, &id)?;
    let d = RenderOptions::default();
    let opts = RenderOptions {
        modality: opt::<RenderModality>(q.modality.as_deref(), d.modality)?,
        verbosity: opt::<Verbosity>(q.verbosity.as_deref(), d.verbosity)?,
        engagement: opt::<Engagement>(q.engagement.as_deref(), d.engagement)?,
        show_emoji: q.show_emoji.unwrap_or(d.show_emoji),
    };
    let scheme = load_scheme(&dir)?;
    let store = AssetStore::open(dir.join(ASSETS_DIR))?;
    let links = if q.inline {
        AssetLinks::Inline
    } else {
        AssetLinks::Relative(format!("{ASSETS_DIR}/"))
    };
    Ok(Html(Renderer { store: &store, links }.render(&scheme, &opts)?))
}
