//! HTTP front end for configuration sessions.
//!
//! | endpoint                                   | success                            |
//! |--------------------------------------------|------------------------------------|
//! | `POST /models` (model text, ≤ 1 MiB)        | 201 `{modelId, modelConsequences}` |
//! | `POST /sessions` `{modelId}`               | 201 `{sessionId, state}`           |
//! | `GET /sessions/{id}`                       | 200 snapshot                       |
//! | `POST /sessions/{id}/decisions`            | 201 `{decisionId, epoch}`          |
//! | `DELETE /sessions/{id}/decisions/{did}`    | 204                                |
//! | `GET /sessions/{id}/events`                | 200 NDJSON stream                  |
//!
//! Errors are `{"code", "message", "details"}` bodies.

mod error;
mod lru;

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use fdconfig_core::model::parse_model;
use fdconfig_core::session::{prepare_model_with_budget, DecisionId, PreparedModel, Restriction, SessionError};
use fdconfig_core::solver::DEFAULT_NODE_BUDGET;
use fdconfig_core::Session;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use error::ApiError;
pub use lru::Lru;

pub const MAX_MODEL_BYTES: usize = 1 << 20;

#[derive(Clone, Debug)]
pub struct Config {
    pub addr: SocketAddr,
    /// Live sessions kept in memory; the least recently used is dropped
    /// beyond this. Uploaded models share the same cap.
    pub session_cap: usize,
    pub node_budget: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config { addr: SocketAddr::from(([127, 0, 0, 1], 7070)), session_cap: 100, node_budget: DEFAULT_NODE_BUDGET }
    }
}

pub struct AppState {
    config: Config,
    models: Mutex<Lru<String, Arc<PreparedModel>>>,
    sessions: Mutex<Lru<String, Arc<Session>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: Config) -> Arc<Self> {
        Arc::new(AppState {
            models: Mutex::new(Lru::new(config.session_cap)),
            sessions: Mutex::new(Lru::new(config.session_cap)),
            next_id: AtomicU64::new(1),
            config,
        })
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.next_id.fetch_add(1, Ordering::Relaxed))
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions.lock().get(&id.to_string()).ok_or_else(|| ApiError::unknown_session(id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/models", post(create_model))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/decisions", post(post_decision))
        .route("/sessions/{id}/decisions/{decision}", delete(delete_decision))
        .route("/sessions/{id}/events", get(events))
        .layer(DefaultBodyLimit::max(MAX_MODEL_BYTES))
        .with_state(state)
}

pub async fn serve(config: Config) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    axum::serve(listener, router(AppState::new(config))).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ModelCreated<'a> {
    model_id: String,
    model_consequences: &'a fdconfig_core::Consequences,
}

async fn create_model(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::invalid_request("model text is not UTF-8"))?;
    let budget = app.config.node_budget;
    let prepared = blocking(move || {
        let m = parse_model(&text).map_err(ApiError::from)?;
        prepare_model_with_budget(Arc::new(m), budget).map_err(ApiError::from)
    })
    .await?;
    let id = app.fresh_id("m");
    let response = (
        StatusCode::CREATED,
        Json(ModelCreated { model_id: id.clone(), model_consequences: &prepared.consequences }),
    )
        .into_response();
    app.models.lock().insert(id, Arc::new(prepared));
    Ok(response)
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateSession {
    model_id: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SessionCreated {
    session_id: String,
    state: fdconfig_core::SessionSnapshot,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(ApiError::from)?;
    let prepared = app.models.lock().get(&req.model_id).ok_or_else(|| ApiError::unknown_model(&req.model_id))?;
    let session = blocking(move || Session::from_prepared(&prepared)).await.map_err(ApiError::from)?;
    let id = app.fresh_id("s");
    let state = session.state();
    // An evicted session is dropped outside the lock; dropping joins its worker.
    let evicted = app.sessions.lock().insert(id.clone(), Arc::new(session));
    drop(evicted);
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id: id, state })).into_response())
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    Ok(Json(s.state()).into_response())
}

#[derive(Deserialize)]
struct PostDecision {
    variable: String,
    restriction: Restriction,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DecisionPosted {
    decision_id: DecisionId,
    epoch: u64,
}

async fn post_decision(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<PostDecision>, JsonRejection>,
) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let Json(req) = body.map_err(ApiError::from)?;
    let (decision, epoch) =
        blocking(move || s.post_decision_epoch(&req.variable, req.restriction)).await.map_err(ApiError::from)?;
    Ok((StatusCode::CREATED, Json(DecisionPosted { decision_id: decision.id, epoch })).into_response())
}

async fn delete_decision(
    State(app): State<Arc<AppState>>,
    Path((id, decision)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let did = decision.parse::<u64>().map(DecisionId).map_err(|_| ApiError::unknown_decision(&decision))?;
    blocking(move || s.retract_decision(did)).await.map_err(|_| ApiError::unknown_decision(&decision))?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

/// One JSON event per line. The stream starts with the current epoch's
/// state and ends when the session is dropped.
async fn events(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let (tx, rx) = tokio::sync::mpsc::unbounded_channel::<Bytes>();
    s.subscribe(move |e| {
        let mut line = serde_json::to_vec(e).expect("events serialize");
        line.push(b'\n');
        tx.send(Bytes::from(line)).is_ok()
    });
    let stream = futures_util::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|line| (Ok::<_, Infallible>(line), rx))
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response())
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::InfeasibleModel => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "infeasible_model", e.to_string()),
            SessionError::ResourceLimit => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "resource_limit", e.to_string()),
            SessionError::Translate(t) => ApiError::from(t),
            SessionError::Solver(s) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", s.to_string()),
        }
    }
}
