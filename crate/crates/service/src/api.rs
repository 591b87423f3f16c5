//! HTTP routes.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use steerbench_core::metrics::MetricsReport;
use tokio::sync::{Mutex, RwLock};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::session::{Condition, Engine, EngineConfig, Event, FeedbackBody, Mode, StudySession};
use crate::storyboard::SESSION_LENGTH;
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Directory served under `/app`.
    pub static_dir: Option<PathBuf>,
    /// When set, API routes require `Authorization: Bearer <token>`.
    pub token: Option<String>,
    /// Write a snapshot every this many events.
    pub snapshot_every: u64,
    pub engine: EngineConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("study-data"),
            static_dir: None,
            token: None,
            snapshot_every: 5,
            engine: EngineConfig::default(),
        }
    }
}

pub struct AppState {
    pub engine: Arc<Engine>,
    store: Store,
    sessions: RwLock<HashMap<String, Arc<Mutex<StudySession>>>>,
    assigned: StdMutex<usize>,
    token: Option<String>,
    snapshot_every: u64,
}

impl AppState {
    /// Build the engine and replay every persisted session.
    pub fn open(config: &ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        Self::with_engine(config, Arc::new(Engine::new(config.engine.clone())?))
    }

    pub fn with_engine(config: &ServiceConfig, engine: Arc<Engine>) -> Result<Arc<Self>, ServiceError> {
        let store = Store::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        let mut assigned = 0;
        for id in store.session_ids()? {
            let s = store.load(&engine, &id)?;
            assigned += usize::from(s.assigned);
            sessions.insert(id, Arc::new(Mutex::new(s)));
        }
        tracing::info!(sessions = sessions.len(), "replayed session logs");
        Ok(Arc::new(AppState {
            engine,
            store,
            sessions: RwLock::new(sessions),
            assigned: StdMutex::new(assigned),
            token: config.token.clone(),
            snapshot_every: config.snapshot_every.max(1),
        }))
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<StudySession>>, ServiceError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    /// Validate on a copy, persist, then commit.
    fn commit(&self, session: &mut StudySession, event: &Event) -> Result<Option<crate::session::FeedbackOutcome>, ServiceError> {
        let mut next = session.clone();
        let out = next.apply(&self.engine, event)?;
        self.store.append(&next.id, event)?;
        if next.events % self.snapshot_every == 0 || next.is_complete() {
            self.store.snapshot(&next)?;
        }
        *session = next;
        Ok(out)
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/questionnaire", post(questionnaire))
        .route("/sessions/{id}/report", get(report))
        .route_layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state);
    let app = Router::new().merge(api).route("/health", get(|| async { "ok" }));
    match static_dir {
        Some(dir) => app.nest_service("/app", ServeDir::new(dir)),
        None => app,
    }
}

async fn auth(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ServiceError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

/// JSON body whose errors name the offending field.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Default> FromRequest<S> for Body<T> {
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ServiceError::Invalid {
            field: "body".into(),
            message: e.to_string(),
        })?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Ok(Body(T::default()));
        }
        let mut de = serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(&mut de).map(Body).map_err(|e| {
            let path = e.path().to_string();
            ServiceError::Invalid {
                field: if path == "." { "body".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    condition: Option<Condition>,
    seed: Option<u64>,
    mode: Option<Mode>,
}

#[derive(Debug, Serialize)]
struct SessionSummary {
    id: String,
    condition: Condition,
    mode: Mode,
    cursor: usize,
    total: usize,
    complete: bool,
    questionnaire_done: bool,
}

fn summary(s: &StudySession) -> SessionSummary {
    SessionSummary {
        id: s.id.clone(),
        condition: s.condition,
        mode: s.mode,
        cursor: s.cursor,
        total: s.storyboards.len(),
        complete: s.is_complete(),
        questionnaire_done: s.questionnaire.is_some(),
    }
}

fn new_id() -> String {
    let mut b = [0u8; 16];
    rand::rng().fill_bytes(&mut b);
    hex::encode(b)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Body(body): Body<CreateBody>,
) -> Result<impl IntoResponse, ServiceError> {
    let (condition, assigned) = match body.condition {
        Some(c) => (c, false),
        None => {
            let mut n = state.assigned.lock().expect("counter lock");
            let c = Condition::ALL[*n % Condition::ALL.len()];
            *n += 1;
            (c, true)
        }
    };
    let seed = body.seed.unwrap_or_else(|| rand::rng().next_u64());
    let id = new_id();
    let event = StudySession::creation(id.clone(), condition, body.mode.unwrap_or_default(), seed, assigned);
    let session = StudySession::create(&state.engine, &event)?;
    state.store.append(&id, &event)?;
    let out = summary(&session);
    state.sessions.write().await.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let s = state.session(&id).await?;
    let s = s.lock().await;
    Ok(Json(summary(&s)))
}

async fn next(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let s = state.session(&id).await?;
    let s = s.lock().await;
    Ok(Json(s.offer(&state.engine)?))
}

async fn feedback(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<Option<FeedbackBody>>,
) -> Result<impl IntoResponse, ServiceError> {
    let body = body.ok_or_else(|| ServiceError::Invalid {
        field: "body".into(),
        message: "feedback body required".into(),
    })?;
    let s = state.session(&id).await?;
    let mut s = s.lock().await;
    let out = state.commit(&mut s, &Event::Feedback { body })?;
    Ok(Json(out))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionnaireBody {
    ratings: Option<[u8; 5]>,
}

async fn questionnaire(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(body): Body<QuestionnaireBody>,
) -> Result<impl IntoResponse, ServiceError> {
    let ratings = body.ratings.ok_or_else(|| ServiceError::Invalid {
        field: "ratings".into(),
        message: "five ratings required".into(),
    })?;
    let s = state.session(&id).await?;
    let mut s = s.lock().await;
    state.commit(&mut s, &Event::Questionnaire { ratings })?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub n: usize,
    pub chose_adapted: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionReport {
    pub id: String,
    pub condition: Condition,
    pub mode: Mode,
    pub interactions: usize,
    pub metrics: Option<MetricsReport>,
    pub detection: Option<DetectionSummary>,
    pub questionnaire: Option<[u8; 5]>,
    pub final_alphas: [f64; 5],
    pub log_sha256: String,
}

async fn report(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let s = state.session(&id).await?;
    let s = s.lock().await;
    if s.events <= 1 {
        return Err(ServiceError::Conflict("no feedback recorded yet".into()));
    }
    let detection = (s.mode == Mode::Detection).then(|| DetectionSummary {
        n: s.choices.len(),
        chose_adapted: s.choices.iter().filter(|c| c.chose_adapted).count(),
    });
    Ok(Json(SessionReport {
        id: s.id.clone(),
        condition: s.condition,
        mode: s.mode,
        interactions: s.cursor.min(SESSION_LENGTH),
        metrics: s.metrics()?,
        detection,
        questionnaire: s.questionnaire,
        final_alphas: s.state.alphas(),
        log_sha256: state.store.log_digest(&s.id)?,
    }))
}
