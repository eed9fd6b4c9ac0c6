use std::io::{BufRead, BufReader};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use airan_agent::backend::StepContext;
use airan_agent::{AgentError, Backend, Decision, HeuristicBackend, Turn, TurnEvent};
use airan_gateway::jobs::{EvalJob, JobStatus};
use airan_gateway::server::{router, AppState};
use airan_gateway::GatewayConfig;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use tempfile::TempDir;

struct Server {
    base: String,
    dir: TempDir,
    _rt: tokio::runtime::Runtime,
}

fn start_with(backend: Option<Arc<dyn Backend>>) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let cfg = GatewayConfig {
        data_dir: dir.path().to_path_buf(),
        eval_workers: Some(2),
        ..GatewayConfig::default()
    };
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    let state = match backend {
        Some(b) => AppState::with_backend(&cfg, b),
        None => AppState::new(&cfg),
    }
    .unwrap();
    rt.spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        dir,
        _rt: rt,
    }
}

fn start() -> Server {
    start_with(None)
}

fn client() -> Client {
    Client::builder().timeout(Duration::from_secs(120)).build().unwrap()
}

fn get(c: &Client, url: String) -> (StatusCode, Value) {
    let r = c.get(url).send().unwrap();
    (r.status(), r.json().unwrap())
}

fn new_session(c: &Client, s: &Server, persona: &str) -> String {
    let r = c.post(format!("{}/sessions", s.base)).json(&json!({"persona": persona})).send().unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    let v: Value = r.json().unwrap();
    assert_eq!(v["world"], "interactive");
    v["id"].as_str().unwrap().to_string()
}

fn read_frames(r: reqwest::blocking::Response) -> Vec<Value> {
    BufReader::new(r)
        .lines()
        .map(|l| serde_json::from_str(&l.unwrap()).unwrap())
        .collect()
}

#[test]
fn health_reports_ok() {
    let s = start();
    let (st, v) = get(&client(), format!("{}/healthz", s.base));
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[test]
fn hundred_ticks_advance_state_version_by_hundred() {
    let s = start();
    let c = client();
    let before = get(&c, format!("{}/healthz", s.base)).1["state_version"].as_u64().unwrap();
    let r = c.post(format!("{}/sim/tick", s.base)).json(&json!({"n": 100})).send().unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let v: Value = r.json().unwrap();
    assert_eq!(v["state_version"].as_u64().unwrap(), before + 100);
    let after = get(&c, format!("{}/healthz", s.base)).1;
    assert_eq!(after["state_version"].as_u64().unwrap(), before + 100);
    assert_eq!(after["tick"], v["tick"]);

    let bad = c.post(format!("{}/sim/tick", s.base)).json(&json!({"n": 0})).send().unwrap();
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
}

#[test]
fn state_queries_map_errors_to_statuses() {
    let s = start();
    let c = client();
    let (st, v) = get(&c, format!("{}/state/cell/1/kpi", s.base));
    assert_eq!(st, StatusCode::OK);
    assert!(v["source"].is_string());
    assert!(v["payload"].is_object());
    assert!(v["state_version"].is_u64());

    let (st, v) = get(&c, format!("{}/state/no/such/thing", s.base));
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "NotFound");
    let (st, _) = get(&c, format!("{}/state/cell/99/kpi", s.base));
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[test]
fn streamed_turn_matches_persisted_turn() {
    let s = start();
    let c = client();
    let id = new_session(&c, &s, "engineer");
    for text in ["What is the current load on cell 1?", "And the status of ue 3?"] {
        let r = c.post(format!("{}/sessions/{id}/message", s.base)).json(&json!({"text": text})).send().unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        assert_eq!(r.headers()["content-type"], "application/x-ndjson");
        let frames = read_frames(r);
        let (last, events) = frames.split_last().unwrap();
        let events: Vec<TurnEvent> = events
            .iter()
            .map(|f| serde_json::from_value(f["event"].clone()).unwrap())
            .collect();
        assert!(!events.is_empty());
        let streamed: Turn = serde_json::from_value(last["turn"].clone()).unwrap();
        assert_eq!(Turn::from_events(&events).unwrap(), streamed);
    }
    let (st, v) = get(&c, format!("{}/sessions/{id}/turns", s.base));
    assert_eq!(st, StatusCode::OK);
    let persisted: Vec<Turn> = serde_json::from_value(v).unwrap();
    assert_eq!(persisted.len(), 2);
    let on_disk = std::fs::read_to_string(s.dir.path().join("sessions").join(format!("{id}.jsonl"))).unwrap();
    assert_eq!(on_disk.lines().count(), 2);
}

#[test]
fn unknown_session_is_404() {
    let s = start();
    let c = client();
    let r = c.post(format!("{}/sessions/s-404/message", s.base)).json(&json!({"text": "hi"})).send().unwrap();
    assert_eq!(r.status(), StatusCode::NOT_FOUND);
    assert_eq!(r.json::<Value>().unwrap()["error"], "UnknownSession");
    let (st, _) = get(&c, format!("{}/sessions/s-404/turns", s.base));
    assert_eq!(st, StatusCode::NOT_FOUND);
}

type Gate = Arc<(Mutex<bool>, Condvar)>;

/// Blocks its first decision until the gate opens.
struct Gated {
    gate: Gate,
}

impl Backend for Gated {
    fn name(&self) -> &str {
        "gated"
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, AgentError> {
        let (lock, cv) = &*self.gate;
        let mut open = lock.lock().unwrap();
        while !*open {
            open = cv.wait(open).unwrap();
        }
        HeuristicBackend.decide(ctx)
    }
}

#[test]
fn second_message_while_running_is_409() {
    let gate: Gate = Arc::new((Mutex::new(false), Condvar::new()));
    let s = start_with(Some(Arc::new(Gated { gate: gate.clone() })));
    let c = client();
    let id = new_session(&c, &s, "engineer");
    let url = format!("{}/sessions/{id}/message", s.base);
    let first = c.post(&url).json(&json!({"text": "load on cell 2?"})).send().unwrap();
    assert_eq!(first.status(), StatusCode::OK);

    let second = c.post(&url).json(&json!({"text": "load on cell 3?"})).send().unwrap();
    assert_eq!(second.status(), StatusCode::CONFLICT);
    assert_eq!(second.json::<Value>().unwrap()["error"], "TurnInFlight");

    *gate.0.lock().unwrap() = true;
    gate.1.notify_all();
    let frames = read_frames(first);
    assert!(frames.last().unwrap().get("turn").is_some());

    let third = c.post(&url).json(&json!({"text": "load on cell 3?"})).send().unwrap();
    assert_eq!(third.status(), StatusCode::OK);
    read_frames(third);
}

fn wait_job(c: &Client, s: &Server, id: &str) -> EvalJob {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let job: EvalJob = c.get(format!("{}/eval/jobs/{id}", s.base)).send().unwrap().json().unwrap();
        if matches!(job.status, JobStatus::Done | JobStatus::Failed) {
            return job;
        }
        assert!(Instant::now() < deadline, "job {id} did not finish");
        std::thread::sleep(Duration::from_millis(50));
    }
}

fn submit(c: &Client, s: &Server, body: Value) -> EvalJob {
    let r = c.post(format!("{}/eval/jobs", s.base)).json(&body).send().unwrap();
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    r.json().unwrap()
}

#[test]
fn invalid_suite_job_fails_with_message() {
    let s = start();
    let c = client();
    let bad = s.dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"header": {}, "scenarios": [{"id": 3}]}"#).unwrap();
    let job = submit(&c, &s, json!({"suite": bad, "backend": "heuristic"}));
    assert_eq!(job.status, JobStatus::Queued);
    let done = wait_job(&c, &s, &job.id);
    assert_eq!(done.status, JobStatus::Failed);
    assert!(!done.error.unwrap().is_empty());
    let r = c.get(format!("{}/eval/jobs/{}/report", s.base, job.id)).send().unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    let (st, _) = get(&c, format!("{}/eval/jobs/job-999", s.base));
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[test]
fn scripted_jobs_score_perfectly_and_reproduce() {
    let s = start();
    let c = client();
    let a = submit(&c, &s, json!({"suite": "builtin", "backend": "scripted"}));
    let b = submit(&c, &s, json!({"suite": "builtin", "backend": "scripted"}));
    let mut bodies = Vec::new();
    for job in [a, b] {
        let done = wait_job(&c, &s, &job.id);
        assert_eq!(done.status, JobStatus::Done, "{:?}", done.error);
        let r = c.get(format!("{}/eval/jobs/{}/report", s.base, job.id)).send().unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        bodies.push(r.bytes().unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    let report: Value = serde_json::from_slice(&bodies[0]).unwrap();
    assert_eq!(report["overall"].as_f64().unwrap(), 1.0);
    assert_eq!(report["scenarios"].as_array().unwrap().len(), 50);
}
