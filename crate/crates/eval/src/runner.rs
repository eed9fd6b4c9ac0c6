//! Runs scenarios against a backend and scores the resulting traces.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use airan_agent::session::Clock;
use airan_agent::tools::knowledge_query;
use airan_agent::{Agent, Backend, ConversationSession, TestbedTools, Turn};
use airan_core::testbed::SharedTestbed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::report::{build_report, Report};
use crate::scenario::{Difficulty, GroundTruth, Scenario};
use crate::score::{
    detect_hallucination, expected_from_value, score_deterministic, score_planning, score_rubric, score_tool_use,
    Judge, LayerScores,
};
use crate::EvalError;

/// One executed turn with the ground truth as resolved right after it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub scenario_id: String,
    pub category: String,
    pub difficulty: Difficulty,
    pub turn_index: usize,
    pub turn: Turn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_ground_truth: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTrace {
    pub scenario_id: String,
    pub turns: Vec<TurnRecord>,
}

fn resolve(shared: &SharedTestbed, gt: &GroundTruth) -> Option<Value> {
    let GroundTruth::Deterministic {
        path,
        params,
        pointer,
        expected_value,
        ..
    } = gt
    else {
        return None;
    };
    if let Some(v) = expected_value {
        return Some(v.clone());
    }
    let mut all = params.clone();
    all.insert("path".into(), Value::String(path.clone()));
    let tool = if path.ends_with("/_all") { "knowledge_list" } else { "knowledge_get" };
    let query = knowledge_query(tool, &all).ok()?;
    let res = shared.query_uncached(&query).ok()?;
    res.payload.pointer(pointer).cloned()
}

pub type ClockFactory = dyn Fn() -> Arc<dyn Clock> + Send + Sync;

/// Runs one scenario on a fresh testbed. The session id is the scenario id.
pub fn run_scenario(
    sc: &Scenario,
    backend: Arc<dyn Backend>,
    clock: Option<Arc<dyn Clock>>,
) -> Result<ScenarioTrace, EvalError> {
    let shared = sc.sim_config.build()?;
    let tools = Arc::new(TestbedTools::new(shared.clone()).with_verification(true));
    let mut agent = Agent::new(backend, tools);
    if let Some(c) = clock {
        agent = agent.with_clock(c);
    }
    let mut session = ConversationSession::new(sc.id.clone(), sc.persona).for_scenario(sc.id.clone());
    let mut turns = Vec::with_capacity(sc.turns.len());
    for (i, st) in sc.turns.iter().enumerate() {
        let turn = agent.run_turn(&mut session, &st.utterance);
        turns.push(TurnRecord {
            scenario_id: sc.id.clone(),
            category: sc.category.clone(),
            difficulty: sc.difficulty,
            turn_index: i,
            turn,
            resolved_ground_truth: resolve(&shared, &st.ground_truth),
        });
    }
    tracing::debug!(scenario = %sc.id, turns = turns.len(), "scenario done");
    Ok(ScenarioTrace {
        scenario_id: sc.id.clone(),
        turns,
    })
}

/// Runs every scenario in parallel; traces keep suite order.
pub fn run_suite(
    scenarios: &[Scenario],
    backend: Arc<dyn Backend>,
    clock: Option<&ClockFactory>,
) -> Result<Vec<ScenarioTrace>, EvalError> {
    scenarios
        .par_iter()
        .map(|sc| run_scenario(sc, backend.clone(), clock.map(|f| f())))
        .collect()
}

/// Scores one recorded turn. Error turns score zero everywhere.
pub fn score_turn(sc: &Scenario, rec: &TurnRecord, judge: &dyn Judge) -> LayerScores {
    let st = &sc.turns[rec.turn_index];
    let turn = &rec.turn;
    if turn.error.is_some() {
        return LayerScores {
            hallucinated: detect_hallucination(turn),
            ..LayerScores::default()
        };
    }
    let e2e = match &st.ground_truth {
        GroundTruth::Deterministic {
            entity_kind, tolerance, ..
        } => {
            let expected = rec
                .resolved_ground_truth
                .as_ref()
                .and_then(|v| expected_from_value(v, *entity_kind));
            score_deterministic(turn, expected.as_ref(), *tolerance)
        }
        GroundTruth::Rubric { reference_answer_text } => score_rubric(turn, reference_answer_text, judge),
    };
    LayerScores {
        planning_fidelity: score_planning(turn, &st.reference_plans),
        tool_accuracy: score_tool_use(turn, &st.reference_tool_calls),
        e2e_success: e2e,
        hallucinated: detect_hallucination(turn),
    }
}

/// Scores traces against their scenarios and aggregates a report.
pub fn evaluate(scenarios: &[Scenario], traces: &[ScenarioTrace], judge: &dyn Judge) -> Result<Report, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut scored = Vec::with_capacity(traces.len());
    for tr in traces {
        let sc = scenarios
            .iter()
            .find(|s| s.id == tr.scenario_id)
            .ok_or_else(|| EvalError::TraceMismatch(format!("no scenario {}", tr.scenario_id)))?;
        if tr.turns.len() > sc.turns.len() {
            return Err(EvalError::TraceMismatch(format!("{}: too many turns", sc.id)));
        }
        let scores: Vec<LayerScores> = tr.turns.iter().map(|r| score_turn(sc, r, judge)).collect();
        scored.push((sc, tr, scores));
    }
    Ok(build_report(&scored))
}

pub fn write_traces(path: &Path, traces: &[ScenarioTrace]) -> Result<(), EvalError> {
    let io = |e: std::io::Error| EvalError::Io(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for rec in traces.iter().flat_map(|t| &t.turns) {
        let line = serde_json::to_string(rec).map_err(|e| EvalError::Io(e.to_string()))?;
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Reads a JSONL trace file back, regrouping turns by scenario in file order.
pub fn read_traces(path: &Path) -> Result<Vec<ScenarioTrace>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    let mut out: Vec<ScenarioTrace> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: TurnRecord =
            serde_json::from_str(line).map_err(|e| EvalError::Io(format!("line {}: {e}", n + 1)))?;
        match out.iter_mut().find(|t| t.scenario_id == rec.scenario_id) {
            Some(t) => t.turns.push(rec),
            None => out.push(ScenarioTrace {
                scenario_id: rec.scenario_id.clone(),
                turns: vec![rec],
            }),
        }
    }
    Ok(out)
}
