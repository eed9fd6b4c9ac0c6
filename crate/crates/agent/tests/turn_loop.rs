use std::sync::Arc;

use airan_agent::backend::{Script, ScriptEntry, ScriptStep};
use airan_agent::intent::CATEGORIES;
use airan_agent::tools::Params;
use airan_agent::{
    Agent, ConversationSession, EntityKind, EntityRef, HeuristicBackend, Persona, ScriptedBackend, StepClock,
    TestbedTools, ToolFamily, ToolResult, Turn, TurnErrorKind, TurnEvent,
};
use airan_core::testbed::{SharedTestbed, TestbedConfig};
use proptest::prelude::*;
use serde_json::{json, Value};

fn tools() -> Arc<TestbedTools> {
    let shared = SharedTestbed::from_config(&TestbedConfig::default()).unwrap();
    shared.tick(5);
    Arc::new(TestbedTools::new(shared).with_verification(true))
}

fn heuristic() -> Agent {
    Agent::new(Arc::new(HeuristicBackend), tools()).with_clock(Arc::new(StepClock::new(100)))
}

fn params(v: Value) -> Params {
    v.as_object().unwrap().clone()
}

fn req(tool: &str, p: Value) -> ScriptStep {
    ScriptStep::ToolRequest {
        tool: tool.into(),
        params: params(p),
    }
}

fn entry(turn: usize, steps: Vec<ScriptStep>) -> ScriptEntry {
    ScriptEntry {
        scenario_id: "s1".into(),
        turn_index: turn,
        intent: None,
        plan: None,
        steps,
    }
}

fn scripted(entries: Vec<ScriptEntry>) -> Agent {
    Agent::new(Arc::new(ScriptedBackend::new(Script { entries })), tools()).with_clock(Arc::new(StepClock::new(100)))
}

#[test]
fn fault_diagnosis_turn_end_to_end() {
    let agent = heuristic();
    let mut s = ConversationSession::new("a", Persona::Engineer);
    let t = agent.run_turn(&mut s, "Why is sector 3 dropping packets?");
    assert_eq!(t.intent.category, "fault_diagnosis");
    assert_eq!(t.tool_calls.len(), 3);
    assert!(t.tool_calls.iter().all(|c| c.result.is_ok() && c.verified == Some(true)));
    assert!(t.response.text.contains("Cell 3"));
    assert!(!t.response.claims.is_empty());
    assert_eq!(t.response.ungrounded().count(), 0, "{}", t.response.text);
    assert!(t.error.is_none());
    assert_eq!(s.turns.len(), 1);
}

#[test]
fn scripted_turns_are_bitwise_reproducible() {
    let run = || {
        let agent = scripted(vec![entry(
            0,
            vec![
                req("knowledge_get", json!({"path": "cell/2/load"})),
                ScriptStep::FinalText {
                    text: "Cell 2 load is {{0/load}}.".into(),
                },
            ],
        )]);
        let mut s = ConversationSession::new("a", Persona::Engineer).for_scenario("s1");
        serde_json::to_string(&agent.run_turn(&mut s, "how loaded is cell 2")).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn events_reconstruct_the_turn() {
    let agent = heuristic();
    let mut s = ConversationSession::new("a", Persona::Engineer);
    for u in ["Why is sector 3 dropping packets?", "", "what is the kpi of that cell", "hello"] {
        let mut events: Vec<TurnEvent> = Vec::new();
        let turn = agent.run_turn_streaming(&mut s, u, &mut |e| events.push(e.clone()));
        let wire: Vec<TurnEvent> = events
            .iter()
            .map(|e| serde_json::from_str(&serde_json::to_string(e).unwrap()).unwrap())
            .collect();
        assert_eq!(Turn::from_events(&wire).unwrap(), turn);
        assert!(events.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    }
    let mut gap: Vec<TurnEvent> = Vec::new();
    agent.run_turn_streaming(&mut s, "hello", &mut |e| gap.push(e.clone()));
    gap.remove(1);
    assert!(Turn::from_events(&gap).is_err());
}

#[test]
fn coreference_across_turns() {
    let agent = heuristic();
    let mut s = ConversationSession::new("a", Persona::Engineer);
    agent.run_turn(&mut s, "show the status of ue 4");
    let t = agent.run_turn(&mut s, "what is the signal quality of that UE?");
    assert_eq!(t.intent.entities, vec![EntityRef::new(EntityKind::Ue, 4)]);
    assert_eq!(t.tool_calls[0].params["path"], json!("ue/4/status"));
}

#[test]
fn empty_utterance_is_an_error_turn() {
    let agent = heuristic();
    let mut s = ConversationSession::new("a", Persona::Engineer);
    let t = agent.run_turn(&mut s, "  ");
    assert_eq!(t.error.unwrap().kind, TurnErrorKind::EmptyUtterance);
    assert!(t.tool_calls.is_empty());
    assert!(t.response.claims.is_empty());
    assert_eq!(s.turns.len(), 1);
}

#[test]
fn user_persona_never_reaches_sim_control() {
    let agent = scripted(vec![entry(
        0,
        vec![
            req("sim_advance", json!({"ticks": 3})),
            req("handover_command", json!({"ue": 1, "target_cell": 2})),
            req("knowledge_get", json!({"path": "ue/1/status"})),
            ScriptStep::FinalText { text: "done".into() },
        ],
    )]);
    let mut s = ConversationSession::new("u", Persona::User).for_scenario("s1");
    let t = agent.run_turn(&mut s, "advance 3 ticks");
    assert!(t.tool_calls.iter().all(|c| c.family != ToolFamily::SimControl));
    assert_eq!(t.tool_calls.len(), 1);
    assert_eq!(t.plan.notes.len(), 2);
    assert!(t.plan.tool_steps().all(|s| s.tool_family != Some(ToolFamily::SimControl)));

    let h = heuristic();
    let mut s = ConversationSession::new("u", Persona::User);
    let t = h.run_turn(&mut s, "advance the simulation 5 ticks");
    assert!(t.tool_calls.is_empty());
    assert!(t.response.text.contains("reserved for network engineers"));
}

#[test]
fn step_cap_terminates_the_turn() {
    let steps = (0..9).map(|_| req("knowledge_get", json!({"path": "cell/1/load"}))).collect();
    let agent = scripted(vec![entry(0, steps)]);
    let mut s = ConversationSession::new("a", Persona::Engineer).for_scenario("s1");
    let t = agent.run_turn(&mut s, "loop");
    assert_eq!(t.error.unwrap().kind, TurnErrorKind::StepLimit);
    assert_eq!(t.tool_calls.len(), 8);
}

#[test]
fn tool_errors_are_recorded_and_execution_continues() {
    let agent = scripted(vec![entry(
        0,
        vec![
            req("knowledge_get", json!({"path": "nowhere/1"})),
            req("knowledge_get", json!({"path": "cell/1/load"})),
            req("knowledge_get", json!({"path": "cell/1/load"})),
            ScriptStep::FinalText {
                text: "Load {{1/load}} and {{0/load}}.".into(),
            },
        ],
    )]);
    let mut s = ConversationSession::new("a", Persona::Engineer).for_scenario("s1");
    let t = agent.run_turn(&mut s, "x");
    assert!(matches!(t.tool_calls[0].result, ToolResult::Error(_)));
    assert_eq!(t.tool_calls.len(), 3);
    assert_eq!(t.tool_calls[1].params, t.tool_calls[2].params);
    let ids: Vec<_> = t.tool_calls.iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, ["call-0-0", "call-0-1", "call-0-2"]);
    assert!(t.response.text.ends_with("and n/a."));
}

#[test]
fn backend_failure_mid_session_leaves_earlier_turns_alone() {
    let agent = scripted(vec![
        entry(0, vec![req("knowledge_list", json!({"path": "cell/_all"})), ScriptStep::FinalText { text: "ok".into() }]),
        entry(1, vec![ScriptStep::Fail { message: "timeout".into() }]),
    ]);
    let mut s = ConversationSession::new("a", Persona::Engineer).for_scenario("s1");
    let t0 = agent.run_turn(&mut s, "overview");
    let t1 = agent.run_turn(&mut s, "again");
    assert!(t0.error.is_none());
    assert_eq!(t1.error.unwrap().kind, TurnErrorKind::Backend);
}

#[test]
fn invented_numbers_are_ungrounded() {
    let agent = scripted(vec![entry(
        0,
        vec![
            req("knowledge_get", json!({"path": "cell/1/load"})),
            ScriptStep::FinalText {
                text: "Cell 1 load is {{0/load}} and latency is 987654.321 ms on cell 9.".into(),
            },
        ],
    )]);
    let mut s = ConversationSession::new("a", Persona::Engineer).for_scenario("s1");
    let t = agent.run_turn(&mut s, "x");
    let bad: Vec<_> = t.response.ungrounded().map(|c| c.span.as_str()).collect();
    assert_eq!(bad, ["cell 9", "987654.321"]);
}

#[test]
fn unscripted_turns_fall_back_to_heuristic() {
    let agent = scripted(vec![]);
    let mut s = ConversationSession::new("a", Persona::Engineer).for_scenario("missing");
    let t = agent.run_turn(&mut s, "Why is sector 3 dropping packets?");
    assert_eq!(t.tool_calls.len(), 3);
}

fn utterance_strategy() -> impl Strategy<Value = String> {
    let phrases: Vec<&'static str> = CATEGORIES.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    (
        prop::sample::select(phrases),
        prop::option::of((prop::sample::select(vec!["ue", "cell", "bs", "service", "slice", "server"]), 0u32..12)),
        prop::option::of(1u32..30),
    )
        .prop_map(|(p, ent, ticks)| {
            let mut s = format!("please {p}");
            if let Some((k, id)) = ent {
                s.push_str(&format!(" for {k} {id}"));
            }
            if let Some(t) = ticks {
                s.push_str(&format!(" over {t} ticks"));
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    #[test]
    fn heuristic_responses_are_fully_grounded(
        utterances in prop::collection::vec(utterance_strategy(), 1..4),
        persona in prop::sample::select(vec![Persona::Engineer, Persona::User]),
    ) {
        let agent = heuristic();
        let mut s = ConversationSession::new("p", persona);
        for u in &utterances {
            let t = agent.run_turn(&mut s, u);
            let bad: Vec<_> = t.response.ungrounded().map(|c| c.span.clone()).collect();
            prop_assert!(bad.is_empty(), "{u:?} -> {:?} ungrounded {:?}", t.response.text, bad);
            prop_assert!(t.tool_calls.len() <= 8);
            if persona == Persona::User {
                prop_assert!(t.tool_calls.iter().all(|c| c.family != ToolFamily::SimControl));
            }
            let labels = t.plan.labels();
            let called: Vec<String> = t.tool_calls.iter().map(|c| airan_agent::tools::step_label(&c.tool, &c.params)).collect();
            prop_assert_eq!(labels, called);
        }
    }
}
