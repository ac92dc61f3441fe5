//! HTTP routes.
//!
//! | method | path                      | body / result |
//! |--------|---------------------------|---------------|
//! | GET    | `/labels`                 | the six label codes and names |
//! | GET    | `/sessions`               | progress of every session |
//! | POST   | `/sessions`               | `{annotator_id, pairs: [key], mode, round_index?}` → 201 + session summary |
//! | GET    | `/sessions/{id}/next`     | next pending task, or `{status: "complete", ...}` |
//! | POST   | `/sessions/{id}/labels`   | `{pair: key, label: code}` → progress |
//! | GET    | `/sessions/{id}/progress` | progress |
//! | DELETE | `/sessions/{id}`          | abandon an open session |
//! | GET    | `/pairs/{key}/images`     | URLs of both panel images, 404 without image refs |
//! | GET    | `/images/{*path}`         | image bytes from the corpus directory |
//! | GET    | `/rounds`                 | round reports of the running experiment, if any |
//!
//! Pair keys are `book:page:first_panel`. Tasks never carry model output.

use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use panelscope_core::{Corpus, PanelPair, TransitionLabel};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::session::{Progress, SessionMode, SessionStatus, SessionStore};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Mutex<SessionStore>>,
    pub corpus: Option<Arc<Corpus>>,
    /// Root that image refs are resolved against.
    pub corpus_dir: Option<PathBuf>,
    /// Line-delimited round reports written by a running experiment.
    pub rounds_path: Option<PathBuf>,
}

impl AppState {
    pub fn new(store: SessionStore) -> Self {
        AppState {
            store: Arc::new(Mutex::new(store)),
            corpus: None,
            corpus_dir: None,
            rounds_path: None,
        }
    }

    fn store(&self) -> MutexGuard<'_, SessionStore> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/labels", get(labels))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", axum::routing::delete(abandon_session))
        .route("/sessions/{id}/next", get(next_task))
        .route("/sessions/{id}/labels", axum::routing::post(submit_label))
        .route("/sessions/{id}/progress", get(progress))
        .route("/pairs/{key}/images", get(pair_images))
        .route("/images/{*path}", get(image_file))
        .route("/rounds", get(rounds))
        .with_state(state)
}

#[derive(Serialize)]
struct LabelInfo {
    code: &'static str,
    short_code: &'static str,
    name: &'static str,
    shortcut: usize,
}

async fn labels() -> Json<Vec<LabelInfo>> {
    Json(
        TransitionLabel::ALL
            .iter()
            .map(|l| LabelInfo {
                code: l.code(),
                short_code: l.short_code(),
                name: l.name(),
                shortcut: l.index() + 1,
            })
            .collect(),
    )
}

async fn list_sessions(State(st): State<AppState>) -> Json<Vec<Progress>> {
    Json(st.store().sessions().map(|s| s.progress()).collect())
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub annotator_id: String,
    pub pairs: Vec<String>,
    pub mode: SessionMode,
    #[serde(default)]
    pub round_index: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub pending: usize,
    pub progress: Progress,
}

fn parse_pair(key: &str, corpus: Option<&Corpus>) -> Result<PanelPair, ServiceError> {
    let pair = PanelPair::parse_key(key).map_err(|e| ServiceError::Validation(e.to_string()))?;
    if let Some(c) = corpus {
        c.check_pair(&pair)
            .map_err(|e| ServiceError::Validation(e.to_string()))?;
    }
    Ok(pair)
}

async fn create_session(
    State(st): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionSummary>), ServiceError> {
    let pairs = req
        .pairs
        .iter()
        .map(|k| parse_pair(k, st.corpus.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut store = st.store();
    let s = store.create(&req.annotator_id, pairs, req.mode, req.round_index)?;
    let progress = s.progress();
    Ok((
        StatusCode::CREATED,
        Json(SessionSummary {
            session_id: s.session_id.clone(),
            pending: progress.total - progress.completed,
            progress,
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Task {
    pub session_id: String,
    pub pair: String,
    pub position: usize,
    pub total: usize,
    pub completed: usize,
    pub mode: SessionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images: Option<[String; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextResponse {
    Task(Task),
    Complete(Progress),
    Abandoned(Progress),
}

fn image_urls(st: &AppState, pair: &PanelPair) -> Option<[String; 2]> {
    let corpus = st.corpus.as_ref()?;
    let a = corpus.image_ref(&pair.first())?;
    let b = corpus.image_ref(&pair.second())?;
    Some([format!("/images/{a}"), format!("/images/{b}")])
}

async fn next_task(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<NextResponse>, ServiceError> {
    let store = st.store();
    let s = store.get(&id)?;
    let progress = s.progress();
    Ok(Json(match (s.status(), s.next_pending()) {
        (SessionStatus::Abandoned, _) => NextResponse::Abandoned(progress),
        (_, None) => NextResponse::Complete(progress),
        (_, Some((i, pair))) => NextResponse::Task(Task {
            session_id: id.clone(),
            pair: pair.key(),
            position: i + 1,
            total: progress.total,
            completed: progress.completed,
            mode: s.mode,
            images: image_urls(&st, pair),
        }),
    }))
}

#[derive(Debug, Deserialize)]
pub struct SubmitLabel {
    pub pair: String,
    pub label: String,
}

async fn submit_label(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<SubmitLabel>,
) -> Result<Json<Progress>, ServiceError> {
    let label = TransitionLabel::ALL
        .into_iter()
        .find(|l| l.code() == req.label)
        .ok_or_else(|| {
            ServiceError::Validation(format!(
                "invalid label {:?}; expected one of ACT, ASP, SUB, SCE, MOM, NON",
                req.label
            ))
        })?;
    let pair = PanelPair::parse_key(&req.pair).map_err(|e| ServiceError::Validation(e.to_string()))?;
    Ok(Json(st.store().submit(&id, &pair, label)?))
}

async fn progress(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Progress>, ServiceError> {
    Ok(Json(st.store().get(&id)?.progress()))
}

async fn abandon_session(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Progress>, ServiceError> {
    Ok(Json(st.store().abandon(&id)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PairImages {
    pub pair: String,
    pub images: [String; 2],
}

async fn pair_images(State(st): State<AppState>, UrlPath(key): UrlPath<String>) -> Result<Json<PairImages>, ServiceError> {
    let pair = parse_pair(&key, st.corpus.as_deref()).map_err(|e| ServiceError::NotFound(e.to_string()))?;
    let images = image_urls(&st, &pair)
        .ok_or_else(|| ServiceError::NotFound(format!("no images recorded for pair {pair}")))?;
    Ok(Json(PairImages { pair: key, images }))
}

/// Rejects absolute paths and parent components.
fn contained(root: &Path, rel: &str) -> Option<PathBuf> {
    let rel = Path::new(rel);
    rel.components()
        .all(|c| matches!(c, Component::Normal(_)))
        .then(|| root.join(rel))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

async fn image_file(State(st): State<AppState>, UrlPath(rel): UrlPath<String>) -> Result<Response, ServiceError> {
    let not_found = || ServiceError::NotFound(format!("no image {rel:?}"));
    let root = st.corpus_dir.as_ref().ok_or_else(not_found)?;
    let path = contained(root, &rel).ok_or_else(not_found)?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found())?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

async fn rounds(State(st): State<AppState>) -> Result<Response, ServiceError> {
    let path = st
        .rounds_path
        .as_ref()
        .ok_or_else(|| ServiceError::NotFound("no experiment is attached to this server".into()))?;
    let text = match tokio::fs::read_to_string(path).await {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(ServiceError::Storage(e.to_string())),
    };
    let reports: Vec<serde_json::Value> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| serde_json::from_str(l).ok())
        .collect();
    Ok(Json(reports).into_response())
}
