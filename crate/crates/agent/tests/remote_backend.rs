use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use airan_agent::{
    Agent, ConversationSession, Persona, RemoteBackend, RemoteConfig, StepClock, TestbedTools, ToolFamily,
    TurnErrorKind,
};
use airan_core::testbed::{SharedTestbed, TestbedConfig};
use serde_json::Value;

/// Serves canned `(status, body)` replies in order, one per connection, and
/// records each request body.
fn mock(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Value>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(serde_json::from_slice(&buf).unwrap_or(Value::Null));
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn agent(url: String, retries: u32) -> Agent {
    let mut cfg = RemoteConfig::new(url);
    cfg.retries = retries;
    cfg.backoff_ms = 1;
    cfg.timeout_ms = 5_000;
    let shared = SharedTestbed::from_config(&TestbedConfig::default()).unwrap();
    Agent::new(
        Arc::new(RemoteBackend::new(cfg).unwrap()),
        Arc::new(TestbedTools::new(shared).with_verification(true)),
    )
    .with_clock(Arc::new(StepClock::new(10)))
}

#[test]
fn tool_loop_over_the_wire() {
    let (url, seen) = mock(vec![
        (200, r#"{"text":"cell_load_monitoring"}"#.into()),
        (200, r#"{"tool_call":{"name":"knowledge_get","params":{"path":"cell/2/load"}}}"#.into()),
        (200, r#"{"text":"Cell 2 is fine, load 123456.5."}"#.into()),
    ]);
    let a = agent(url, 0);
    let mut s = ConversationSession::new("r", Persona::Engineer);
    let t = a.run_turn(&mut s, "how loaded is cell 2");
    assert!(t.error.is_none(), "{:?}", t.error);
    assert_eq!(t.intent.category, "cell_load_monitoring");
    assert_eq!(t.plan.labels(), ["knowledge_get:cell_load"]);
    assert_eq!(t.tool_calls.len(), 1);
    let bad: Vec<_> = t.response.ungrounded().map(|c| c.span.as_str()).collect();
    assert_eq!(bad, ["123456.5"]);
    let reqs = seen.lock().unwrap();
    assert_eq!(reqs.len(), 3);
    assert!(reqs[1]["tools"].as_array().unwrap().len() >= 8);
    assert_eq!(reqs[2]["messages"].as_array().unwrap().last().unwrap()["role"], "tool");
}

#[test]
fn user_persona_is_offered_no_control_tools() {
    let (url, seen) = mock(vec![
        (200, r#"{"text":"simulation_control"}"#.into()),
        (200, r#"{"tool_call":{"name":"sim_advance","params":{"ticks":2}}}"#.into()),
        (200, r#"{"text":"Not allowed."}"#.into()),
    ]);
    let a = agent(url, 0);
    let mut s = ConversationSession::new("r", Persona::User);
    let t = a.run_turn(&mut s, "advance 2 ticks");
    assert!(t.tool_calls.iter().all(|c| c.family != ToolFamily::SimControl));
    assert_eq!(t.plan.notes.len(), 1);
    let reqs = seen.lock().unwrap();
    let names: Vec<&str> = reqs[1]["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert!(!names.contains(&"sim_advance"));
}

#[test]
fn retries_server_errors_then_gives_up() {
    let (url, seen) = mock(vec![
        (503, "{}".into()),
        (200, r#"{"text":"general_query"}"#.into()),
        (500, "{}".into()),
        (500, "{}".into()),
        (500, "{}".into()),
    ]);
    let a = agent(url, 2);
    let mut s = ConversationSession::new("r", Persona::Engineer);
    let t = a.run_turn(&mut s, "hi");
    assert_eq!(t.error.unwrap().kind, TurnErrorKind::Backend);
    assert_eq!(seen.lock().unwrap().len(), 5);
}

#[test]
fn unreachable_backend_is_a_backend_error() {
    let a = agent("http://127.0.0.1:9/none".into(), 0);
    let mut s = ConversationSession::new("r", Persona::Engineer);
    let t = a.run_turn(&mut s, "status of ue 1");
    assert_eq!(t.error.unwrap().kind, TurnErrorKind::Backend);
    assert!(t.response.claims.is_empty());
}
