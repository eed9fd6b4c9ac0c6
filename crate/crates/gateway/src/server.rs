//! axum routes over one interactive testbed.

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use airan_agent::{Agent, Backend, ConversationSession, Persona, TestbedTools, Turn, TurnEvent};
use airan_core::knowledge::{KnowledgeError, KnowledgeQuery};
use airan_core::testbed::SharedTestbed;
use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::jobs::{JobManager, JobRequest, JobStatus};
use crate::{make_backend, GatewayConfig, GatewayError};

pub const MAX_TICKS_PER_REQUEST: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiSession {
    pub id: String,
    pub persona: Persona,
    pub created_at: u64,
    pub world: String,
}

struct SessionSlot {
    meta: ApiSession,
    session: Mutex<ConversationSession>,
    in_flight: AtomicBool,
}

pub struct AppState {
    pub testbed: SharedTestbed,
    agent: Arc<Agent>,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    next_session: AtomicU64,
    pub jobs: Arc<JobManager>,
    data_dir: PathBuf,
}

impl AppState {
    pub fn new(cfg: &GatewayConfig) -> Result<Arc<Self>, GatewayError> {
        let backend = make_backend(cfg.backend.kind, cfg.backend.script.as_deref(), &[])?;
        Self::with_backend(cfg, backend)
    }

    /// Interactive sessions use `backend` instead of the configured one.
    pub fn with_backend(cfg: &GatewayConfig, backend: Arc<dyn Backend>) -> Result<Arc<Self>, GatewayError> {
        let tb_cfg = cfg.testbed.resolve()?;
        let testbed = SharedTestbed::from_config(&tb_cfg).map_err(|e| GatewayError::Config(e.to_string()))?;
        let tools = Arc::new(TestbedTools::new(testbed.clone()));
        let sessions_dir = cfg.data_dir.join("sessions");
        std::fs::create_dir_all(&sessions_dir)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", sessions_dir.display())))?;
        Ok(Arc::new(Self {
            testbed,
            agent: Arc::new(Agent::new(backend, tools)),
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
            jobs: Arc::new(JobManager::new(cfg.data_dir.join("jobs"), cfg.workers())),
            data_dir: cfg.data_dir.clone(),
        }))
    }

    pub fn session_log(&self, id: &str) -> PathBuf {
        self.data_dir.join("sessions").join(format!("{id}.jsonl"))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.kind, "message": self.message}))).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/state/{*path}", get(state_query))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/turns", get(session_turns))
        .route("/sessions/{id}/message", post(message))
        .route("/sim/tick", post(sim_tick))
        .route("/eval/jobs", post(submit_job).get(list_jobs))
        .route("/eval/jobs/{id}", get(get_job))
        .route("/eval/jobs/{id}/report", get(get_report))
        .with_state(state)
}

/// Binds the configured address. A busy port is an error.
pub async fn bind(cfg: &GatewayConfig) -> Result<TcpListener, GatewayError> {
    TcpListener::bind(&cfg.bind)
        .await
        .map_err(|e| GatewayError::Io(format!("cannot bind {}: {e}", cfg.bind)))
}

pub async fn serve_on(listener: TcpListener, state: Arc<AppState>) -> Result<(), GatewayError> {
    axum::serve(listener, router(state))
        .await
        .map_err(|e| GatewayError::Io(e.to_string()))
}

async fn healthz(State(st): State<Arc<AppState>>) -> Json<Value> {
    let tb = st.testbed.read();
    Json(json!({"status": "ok", "tick": tb.world().tick(), "state_version": st.testbed.state_version()}))
}

async fn state_query(
    State(st): State<Arc<AppState>>,
    Path(path): Path<String>,
    Query(params): Query<BTreeMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let mut q = KnowledgeQuery::new(path);
    q.params = params;
    match st.testbed.query(&q) {
        Ok(r) => Ok(Json(serde_json::to_value(r).expect("query result serializes"))),
        Err(e @ (KnowledgeError::NotRouted(_) | KnowledgeError::UnknownEntity(_))) => {
            Err(ApiError::new(StatusCode::NOT_FOUND, "NotFound", e.to_string()))
        }
        Err(e @ KnowledgeError::InvalidQuery(_)) => Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidQuery", e.to_string())),
        Err(KnowledgeError::SourceFailure { message, .. }) if message.contains("unknown") => {
            Err(ApiError::new(StatusCode::NOT_FOUND, "NotFound", message))
        }
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "SourceFailure", e.to_string())),
    }
}

#[derive(Deserialize)]
struct NewSession {
    #[serde(default = "default_persona")]
    persona: Persona,
}

fn default_persona() -> Persona {
    Persona::Engineer
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    Json(req): Json<NewSession>,
) -> (StatusCode, Json<ApiSession>) {
    let id = format!("s-{}", st.next_session.fetch_add(1, Ordering::Relaxed));
    let meta = ApiSession {
        id: id.clone(),
        persona: req.persona,
        created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        world: "interactive".into(),
    };
    let slot = Arc::new(SessionSlot {
        meta: meta.clone(),
        session: Mutex::new(ConversationSession::new(id.clone(), req.persona)),
        in_flight: AtomicBool::new(false),
    });
    st.sessions.lock().insert(id, slot);
    (StatusCode::CREATED, Json(meta))
}

async fn list_sessions(State(st): State<Arc<AppState>>) -> Json<Vec<ApiSession>> {
    let mut v: Vec<ApiSession> = st.sessions.lock().values().map(|s| s.meta.clone()).collect();
    v.sort_by_key(|s| s.created_at);
    Json(v)
}

fn slot(st: &AppState, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
    st.sessions.lock().get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ApiSession>, ApiError> {
    Ok(Json(slot(&st, &id)?.meta.clone()))
}

pub fn read_session_log(path: &FsPath) -> std::io::Result<Vec<Turn>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

async fn session_turns(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Vec<Turn>>, ApiError> {
    slot(&st, &id)?;
    read_session_log(&st.session_log(&id))
        .map(Json)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Io", e.to_string()))
}

#[derive(Deserialize)]
struct Message {
    text: String,
}

fn append_turn(path: &FsPath, turn: &Turn) -> std::io::Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(turn).map_err(std::io::Error::other)?)
}

fn frame(key: &str, v: impl Serialize) -> String {
    let mut s = serde_json::to_string(&json!({ key: v })).expect("frame serializes");
    s.push('\n');
    s
}

/// Streams `{"event": ...}` frames while the turn runs, then one
/// `{"turn": ...}` frame once it is persisted.
async fn message(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(msg): Json<Message>,
) -> Result<Response, ApiError> {
    let slot = slot(&st, &id)?;
    if slot.in_flight.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
        return Err(ApiError::new(StatusCode::CONFLICT, "TurnInFlight", format!("session {id} is already running a turn")));
    }
    let (tx, rx) = tokio::sync::mpsc::channel::<String>(64);
    let agent = st.agent.clone();
    let log = st.session_log(&id);
    tokio::task::spawn_blocking(move || {
        let turn = {
            let mut session = slot.session.lock();
            agent.run_turn_streaming(&mut session, &msg.text, &mut |e: &TurnEvent| {
                let _ = tx.blocking_send(frame("event", e));
            })
        };
        if let Err(e) = append_turn(&log, &turn) {
            tracing::error!(session = %slot.meta.id, error = %e, "failed to persist turn");
        }
        slot.in_flight.store(false, Ordering::Release);
        let _ = tx.blocking_send(frame("turn", &turn));
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|s| (Ok::<_, Infallible>(s), rx))
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(stream))
        .expect("valid response"))
}

#[derive(Deserialize)]
struct TickRequest {
    #[serde(default = "one")]
    n: u64,
}

fn one() -> u64 {
    1
}

async fn sim_tick(State(st): State<Arc<AppState>>, Json(req): Json<TickRequest>) -> Result<Json<Value>, ApiError> {
    if req.n == 0 || req.n > MAX_TICKS_PER_REQUEST {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "InvalidTicks",
            format!("n must be within 1..={MAX_TICKS_PER_REQUEST}"),
        ));
    }
    let tb = st.testbed.clone();
    let (tick, version) = tokio::task::spawn_blocking(move || {
        let v = tb.tick(req.n);
        (tb.read().world().tick(), v)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?;
    Ok(Json(json!({"ticks": req.n, "tick": tick, "state_version": version})))
}

async fn submit_job(State(st): State<Arc<AppState>>, Json(req): Json<JobRequest>) -> impl IntoResponse {
    (StatusCode::ACCEPTED, Json(st.jobs.submit(req)))
}

async fn list_jobs(State(st): State<Arc<AppState>>) -> impl IntoResponse {
    Json(st.jobs.list())
}

async fn get_job(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    st.jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownJob", format!("no job {id}")))
}

async fn get_report(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = st
        .jobs
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownJob", format!("no job {id}")))?;
    if job.status != JobStatus::Done {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "ReportNotReady",
            format!("job {id} is {:?}", job.status),
        ));
    }
    let body = tokio::fs::read(st.jobs.report_path(&id))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Io", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}
