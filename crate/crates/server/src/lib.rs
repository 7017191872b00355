//! HTTP front end for live sessions. Routes are listed in `API.md`.

mod actor;

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{mpsc, oneshot};

use coexplore_core::field::{generate_voronoi_topic_field_seeded, sample_interest_map, sample_interest_profile, TopicField, VoronoiParams};
use coexplore_core::live::{EventKind, Session, SessionConfig, SessionError, SessionEvent, SessionSnapshot, SubmitOutcome};
use coexplore_core::rng::seeded;
use coexplore_core::selection::ObservationId;

pub use actor::TickReport;
use actor::{Command, Published, SessionTask};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Default)]
pub struct ServerConfig {
    /// Finished sessions write their trace here.
    pub trace_dir: Option<PathBuf>,
}

struct Handle {
    commands: mpsc::Sender<Command>,
    published: Arc<Published>,
    field: Arc<TopicField>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    config: ServerConfig,
    next_id: AtomicU64,
    sessions: RwLock<BTreeMap<String, Arc<Handle>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        AppState(Arc::new(Inner { config, next_id: AtomicU64::new(1), sessions: RwLock::new(BTreeMap::new()) }))
    }

    fn get(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.0.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn app(state: AppState) -> Router {
    Router::new()
        .route("/v1/meta", get(meta))
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_state).delete(delete_session))
        .route("/v1/sessions/{id}/field", get(get_field))
        .route("/v1/sessions/{id}/labels", post(submit_label))
        .route("/v1/sessions/{id}/tick", post(tick))
        .route("/v1/sessions/{id}/events", get(events))
        .route("/v1/sessions/{id}/trace", get(trace))
        .with_state(state)
}

// ---------------------------------------------------------------- errors

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn gone() -> Self {
        Self::new(StatusCode::GONE, "gone", "session task has stopped")
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match e {
            SessionError::UnknownQuery(_) => "unknown_query",
            SessionError::Conflict { .. } => "conflict",
            SessionError::Finished => "finished",
        };
        ApiError::new(StatusCode::CONFLICT, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "code": self.code }))).into_response()
    }
}

async fn ask<T>(handle: &Handle, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ApiError> {
    let (tx, rx) = oneshot::channel();
    handle.commands.send(make(tx)).await.map_err(|_| ApiError::gone())?;
    rx.await.map_err(|_| ApiError::gone())
}

// ---------------------------------------------------------------- handlers

async fn meta() -> Json<serde_json::Value> {
    Json(json!({ "schema_version": SCHEMA_VERSION, "server_version": env!("CARGO_PKG_VERSION") }))
}

/// Body of `POST /v1/sessions`. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub config: SessionConfig,
    /// Voronoi generator parameters for the topic field.
    pub field: VoronoiParams,
    pub field_seed: u64,
    /// Draws a hidden interest map so the session can report true reward.
    pub ground_truth_seed: Option<u64>,
    /// Answer every query from the hidden map instead of waiting for a human.
    pub auto_label: bool,
}

#[derive(Serialize)]
struct Created {
    id: String,
    schema_version: u32,
    snapshot: Arc<SessionSnapshot>,
}

async fn create_session(State(state): State<AppState>, body: Option<Json<CreateSession>>) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let bad = |e: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e);
    if req.auto_label && req.ground_truth_seed.is_none() {
        return Err(bad("auto_label needs ground_truth_seed".into()));
    }
    req.config.mission.validate().map_err(|e| bad(e.to_string()))?;
    let field = Arc::new(generate_voronoi_topic_field_seeded(&req.field, req.field_seed).map_err(|e| bad(e.to_string()))?);
    let ground_truth = match req.ground_truth_seed {
        Some(seed) => {
            let mut rng = seeded(seed);
            let profile = sample_interest_profile(field.topics(), &mut rng).map_err(|e| bad(e.to_string()))?;
            Some(sample_interest_map(&field, &profile, &mut rng).map_err(|e| bad(e.to_string()))?)
        }
        None => None,
    };
    let id = format!("s{}", state.0.next_id.fetch_add(1, Ordering::Relaxed));
    let session = Session::new(id.clone(), req.config, Arc::clone(&field), ground_truth.clone()).map_err(|e| bad(e.to_string()))?;
    let task = SessionTask {
        session,
        auto_label: ground_truth.filter(|_| req.auto_label),
        trace_dir: state.0.config.trace_dir.clone(),
    };
    let (commands, published) = actor::spawn(task).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?;
    let snapshot = published.snapshot();
    state.0.sessions.write().unwrap().insert(id.clone(), Arc::new(Handle { commands, published, field }));
    Ok((StatusCode::CREATED, Json(Created { id, schema_version: SCHEMA_VERSION, snapshot })))
}

#[derive(Serialize)]
struct SessionSummary {
    id: String,
    t: usize,
    t_max: usize,
    finished: bool,
    pending: Option<ObservationId>,
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    let sessions = state.0.sessions.read().unwrap();
    Json(
        sessions
            .iter()
            .map(|(id, h)| {
                let s = h.published.snapshot();
                SessionSummary { id: id.clone(), t: s.t, t_max: s.t_max, finished: s.finished, pending: s.pending.as_ref().map(|q| q.id) }
            })
            .collect(),
    )
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Arc<SessionSnapshot>>, ApiError> {
    Ok(Json(state.get(&id)?.published.snapshot()))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    // dropping the handle closes the command channel, which stops the task
    state.0.sessions.write().unwrap().remove(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Serialize)]
struct FieldView {
    width: usize,
    height: usize,
    topics: usize,
    /// Dominant topic per cell, row-major.
    dominant: Vec<usize>,
}

async fn get_field(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<FieldView>, ApiError> {
    let field = &state.get(&id)?.field;
    Ok(Json(FieldView { width: field.width(), height: field.height(), topics: field.topics(), dominant: field.argmax_topics() }))
}

#[derive(Debug, Deserialize, Serialize)]
pub struct LabelSubmission {
    pub id: ObservationId,
    pub label: bool,
}

async fn submit_label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(sub): Json<LabelSubmission>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let handle = state.get(&id)?;
    let outcome: SubmitOutcome = ask(&handle, |reply| Command::Submit { id: sub.id, label: sub.label, reply }).await??;
    Ok(Json(json!({ "status": outcome })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TickRequest {
    /// Steps to attempt; stops early when blocked or finished. Defaults to 1.
    pub steps: usize,
}

async fn tick(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<TickRequest>>,
) -> Result<Json<TickReport>, ApiError> {
    let handle = state.get(&id)?;
    let steps = body.map_or(1, |Json(b)| b.steps.max(1));
    let report = ask(&handle, |reply| Command::Tick { steps, reply })
        .await?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?;
    Ok(Json(report))
}

async fn trace(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let handle = state.get(&id)?;
    let text = ask(&handle, |reply| Command::Trace { reply })
        .await?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct EventsQuery {
    /// Resume after this event; the `Last-Event-ID` header takes precedence.
    pub after: Option<u64>,
}

fn event_name(e: &SessionEvent) -> &'static str {
    match e.kind {
        EventKind::Stepped { .. } => "stepped",
        EventKind::QueryIssued { .. } => "query_issued",
        EventKind::LabelSubmitted { .. } => "label_submitted",
        EventKind::LabelApplied { .. } => "label_applied",
        EventKind::Finished { .. } => "finished",
    }
}

/// Server-sent events in sequence order, starting after the client's last
/// seen id. The stream ends after the `finished` event.
async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = state.get(&id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .or(q.after)
        .unwrap_or(0);
    let published = Arc::clone(&handle.published);
    let watcher = published.last_event.subscribe();
    let stream = futures::stream::unfold(
        (published, watcher, resume, Vec::<SessionEvent>::new().into_iter(), false),
        |(published, mut watcher, mut cursor, mut buffered, mut done)| async move {
            loop {
                if let Some(e) = buffered.next() {
                    cursor = e.seq;
                    done = matches!(e.kind, EventKind::Finished { .. });
                    let data = serde_json::to_string(&e).unwrap_or_default();
                    let event = Event::default().id(e.seq.to_string()).event(event_name(&e)).data(data);
                    return Some((Ok(event), (published, watcher, cursor, buffered, done)));
                }
                if done {
                    return None;
                }
                let fresh = published.events_after(cursor);
                if !fresh.is_empty() {
                    buffered = fresh.into_iter();
                    continue;
                }
                // the sender lives in the handle; if it is gone no more events come
                watcher.changed().await.ok()?;
            }
        },
    );
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
