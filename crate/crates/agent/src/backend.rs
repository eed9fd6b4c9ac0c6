//! Backend contract plus the heuristic and scripted backends.

use std::collections::HashMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::claims::fmt_value;
use crate::intent::{extract_entities, mention_history, Intent};
use crate::plan::{Persona, Plan, RECOMMENDED};
use crate::render::render_response;
use crate::session::{ToolCall, Turn};
use crate::tools::Params;
use crate::AgentError;

/// What a backend wants next.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    ToolRequest { tool: String, params: Params },
    FinalText { text: String },
}

/// How the turn's plan is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanChoice {
    Declared(Plan),
    /// Category templates from [`crate::plan::template_plan`].
    Heuristic,
    /// One step per executed tool call.
    FromCalls,
}

#[derive(Clone, Copy, Debug)]
pub struct TurnContext<'a> {
    pub session_id: &'a str,
    pub scenario_id: Option<&'a str>,
    pub turn_index: usize,
    pub utterance: &'a str,
    pub persona: Persona,
    pub history: &'a [Turn],
}

#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub turn: &'a TurnContext<'a>,
    pub intent: &'a Intent,
    pub plan: &'a Plan,
    /// Calls executed so far this turn.
    pub calls: &'a [ToolCall],
    /// Decisions already made this turn.
    pub step: usize,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// `None` defers to the keyword classifier.
    fn classify(&self, _ctx: &TurnContext<'_>) -> Result<Option<Intent>, AgentError> {
        Ok(None)
    }

    fn plan(&self, _ctx: &TurnContext<'_>, _intent: &Intent) -> Result<PlanChoice, AgentError> {
        Ok(PlanChoice::Heuristic)
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, AgentError>;
}

/// Keyword intents, template plans and template responses.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeuristicBackend;

impl Backend for HeuristicBackend {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, AgentError> {
        Ok(heuristic_decide(ctx))
    }
}

/// Follows the plan's bound steps in order, then renders a response.
pub fn heuristic_decide(ctx: &StepContext<'_>) -> Decision {
    let next = ctx
        .plan
        .tool_steps()
        .nth(ctx.step)
        .and_then(|s| s.binding.as_ref());
    match next {
        Some(b) => Decision::ToolRequest {
            tool: b.tool.clone(),
            params: resolve_recommended(&b.params, ctx.calls),
        },
        None => Decision::FinalText {
            text: render_response(ctx.intent, ctx.plan, ctx.calls),
        },
    }
}

fn resolve_recommended(params: &Params, calls: &[ToolCall]) -> Params {
    let rec = calls
        .iter()
        .rev()
        .filter(|c| c.tool == "profile_services")
        .find_map(|c| c.result.value().and_then(|v| v.get("recommended_service")).cloned());
    params
        .iter()
        .map(|(k, v)| {
            let v = match (v.as_str(), &rec) {
                (Some(RECOMMENDED), Some(r)) => r.clone(),
                _ => v.clone(),
            };
            (k.clone(), v)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptStep {
    ToolRequest { tool: String, params: Params },
    FinalText { text: String },
    /// Simulated backend failure.
    Fail { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedIntent {
    pub category: String,
    #[serde(default)]
    pub entities: Option<Vec<crate::intent::EntityRef>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub scenario_id: String,
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<ScriptedIntent>,
    /// Declared plan labels; derived from the tool requests when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Vec<String>>,
    pub steps: Vec<ScriptStep>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let v: Value = serde_json::from_str(text).map_err(|e| AgentError::Script(e.to_string()))?;
        let v = if v.is_array() { json!({ "entries": v }) } else { v };
        serde_json::from_value(v).map_err(|e| AgentError::Script(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AgentError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Deterministic decision table keyed by (scenario, turn, step). Turns with
/// no entry fall back to [`HeuristicBackend`].
#[derive(Clone, Debug, Default)]
pub struct ScriptedBackend {
    table: HashMap<(String, usize), ScriptEntry>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let table = script
            .entries
            .into_iter()
            .map(|e| ((e.scenario_id.clone(), e.turn_index), e))
            .collect();
        Self { table }
    }

    pub fn entry(&self, scenario: Option<&str>, turn: usize) -> Option<&ScriptEntry> {
        self.table.get(&(scenario?.to_string(), turn))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn classify(&self, ctx: &TurnContext<'_>) -> Result<Option<Intent>, AgentError> {
        let Some(si) = self.entry(ctx.scenario_id, ctx.turn_index).and_then(|e| e.intent.as_ref()) else {
            return Ok(None);
        };
        let entities = match &si.entities {
            Some(e) => e.clone(),
            None => {
                let history = mention_history(ctx.history.iter().map(|t| &t.intent));
                extract_entities(ctx.utterance, &history)
            }
        };
        Ok(Some(Intent {
            category: si.category.clone(),
            entities,
            confidence: 1.0,
        }))
    }

    fn plan(&self, ctx: &TurnContext<'_>, _intent: &Intent) -> Result<PlanChoice, AgentError> {
        let Some(entry) = self.entry(ctx.scenario_id, ctx.turn_index) else {
            return Ok(PlanChoice::Heuristic);
        };
        let labels = match &entry.plan {
            Some(l) => l.clone(),
            None => entry
                .steps
                .iter()
                .filter_map(|s| match s {
                    ScriptStep::ToolRequest { tool, params } => Some(crate::tools::step_label(tool, params)),
                    _ => None,
                })
                .collect(),
        };
        Ok(PlanChoice::Declared(Plan::from_labels(&labels)))
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, AgentError> {
        let Some(entry) = self.entry(ctx.turn.scenario_id, ctx.turn.turn_index) else {
            return Ok(heuristic_decide(ctx));
        };
        match entry.steps.get(ctx.step) {
            Some(ScriptStep::ToolRequest { tool, params }) => Ok(Decision::ToolRequest {
                tool: tool.clone(),
                params: params
                    .iter()
                    .map(|(k, v)| (k.clone(), fill_value(v, ctx.calls)))
                    .collect(),
            }),
            Some(ScriptStep::FinalText { text }) => Ok(Decision::FinalText {
                text: fill_placeholders(text, ctx.calls),
            }),
            Some(ScriptStep::Fail { message }) => Err(AgentError::Backend(message.clone())),
            None => Err(AgentError::Script(format!(
                "script for {}/{} has no step {}",
                entry.scenario_id, entry.turn_index, ctx.step
            ))),
        }
    }
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{(\d+)(/[^}]*)?\}\}").expect("placeholder regex"));

fn lookup(calls: &[ToolCall], index: &str, pointer: Option<&str>) -> Option<Value> {
    let payload = calls.get(index.parse::<usize>().ok()?)?.result.value()?;
    payload.pointer(pointer.unwrap_or("")).cloned()
}

/// Replaces `{{N/json/pointer}}` with the field of the N-th call's payload.
pub fn fill_placeholders(text: &str, calls: &[ToolCall]) -> String {
    PLACEHOLDER
        .replace_all(text, |c: &regex::Captures<'_>| {
            lookup(calls, &c[1], c.get(2).map(|m| m.as_str())).map_or_else(|| "n/a".into(), |v| fmt_value(&v))
        })
        .into_owned()
}

/// A string parameter that is exactly one placeholder becomes the raw JSON
/// value; embedded placeholders are substituted as text.
fn fill_value(v: &Value, calls: &[ToolCall]) -> Value {
    let Some(s) = v.as_str() else {
        return v.clone();
    };
    match PLACEHOLDER.captures(s) {
        Some(c) if c.get(0).is_some_and(|m| m.as_str() == s) => {
            lookup(calls, &c[1], c.get(2).map(|m| m.as_str())).unwrap_or(Value::Null)
        }
        Some(_) => Value::String(fill_placeholders(s, calls)),
        None => v.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{ToolFamily, ToolResult};

    fn call(result: Value) -> ToolCall {
        ToolCall {
            id: "call-0-0".into(),
            tool: "knowledge_get".into(),
            family: ToolFamily::KnowledgeGet,
            params: Params::new(),
            result: ToolResult::Ok(result),
            state_version: 3,
            issued_at_step: 0,
            verified: Some(true),
        }
    }

    #[test]
    fn placeholders() {
        let calls = [call(json!({"load": 0.4200, "cells": [{"cell": 2}]}))];
        assert_eq!(fill_placeholders("load {{0/load}} at cell {{0/cells/0/cell}} {{1/x}}", &calls), "load 0.42 at cell 2 n/a");
        assert_eq!(fill_value(&json!("{{0/cells/0/cell}}"), &calls), json!(2));
        assert_eq!(fill_value(&json!("c{{0/cells/0/cell}}"), &calls), json!("c2"));
    }

    #[test]
    fn script_accepts_array_or_object() {
        let a = Script::from_json(r#"[{"scenario_id":"s","turn_index":0,"steps":[{"final_text":{"text":"hi"}}]}]"#).unwrap();
        let b = Script::from_json(r#"{"entries":[{"scenario_id":"s","turn_index":0,"steps":[{"final_text":{"text":"hi"}}]}]}"#).unwrap();
        assert_eq!(a, b);
        assert!(Script::from_json("{").is_err());
    }
}
