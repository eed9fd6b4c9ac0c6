//! Scenario corpus schema, loading and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use airan_agent::intent::{is_category, EntityKind};
use airan_agent::tools::{knowledge_query, label_family, tool_family, Params};
use airan_agent::{Persona, ToolFamily};
use airan_core::testbed::{SharedTestbed, TestbedConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::EvalError;

pub const HATTE_VERSION: &str = "1.0";
pub const DEFAULT_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which testbed a scenario runs on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRef {
    pub preset: String,
    pub seed: u64,
    #[serde(default)]
    pub warmup_ticks: u64,
}

impl SimRef {
    pub fn testbed_config(&self) -> Result<TestbedConfig, EvalError> {
        let mut cfg = TestbedConfig::preset(&self.preset).map_err(|e| EvalError::Testbed(e.to_string()))?;
        cfg.sim.seed = self.seed;
        cfg.warmup_ticks = self.warmup_ticks;
        Ok(cfg)
    }

    pub fn build(&self) -> Result<SharedTestbed, EvalError> {
        SharedTestbed::from_config(&self.testbed_config()?).map_err(|e| EvalError::Testbed(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCall {
    pub tool: String,
    #[serde(default)]
    pub required_params: Params,
}

impl ReferenceCall {
    pub fn label(&self) -> String {
        airan_agent::tools::step_label(&self.tool, &self.required_params)
    }
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    /// A field of a knowledge payload. Without `expected_value` the field is
    /// resolved against the scenario's world right after the turn.
    Deterministic {
        path: String,
        #[serde(default, skip_serializing_if = "Params::is_empty")]
        params: Params,
        pointer: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        entity_kind: Option<EntityKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected_value: Option<Value>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
    Rubric {
        reference_answer_text: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTurn {
    pub utterance: String,
    pub reference_plans: Vec<Vec<String>>,
    #[serde(default)]
    pub reference_tool_calls: Vec<ReferenceCall>,
    pub ground_truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub category: String,
    pub difficulty: Difficulty,
    #[serde(default = "default_persona")]
    pub persona: Persona,
    pub sim_config: SimRef,
    pub turns: Vec<ScenarioTurn>,
}

fn default_persona() -> Persona {
    Persona::Engineer
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteHeader {
    #[serde(default)]
    pub difficulty_distribution: BTreeMap<Difficulty, usize>,
    #[serde(default)]
    pub formulas: BTreeMap<String, String>,
}

/// Scenario file: `{hatte_version, header, scenarios}`. A bare array of
/// scenarios is accepted as well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteFile {
    pub hatte_version: String,
    #[serde(default)]
    pub header: SuiteHeader,
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaError {
    pub scenario: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scenario {}: {}: {}", self.scenario, self.field, self.message)
    }
}

impl std::error::Error for SchemaError {}

fn schema(scenario: &str, field: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError {
        scenario: scenario.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_suite(&text)?.scenarios)
}

/// Parses and validates a whole suite; any invalid scenario rejects the file.
pub fn parse_suite(text: &str) -> Result<SuiteFile, SchemaError> {
    if text.trim().is_empty() {
        return Err(schema("<file>", "$", "empty file"));
    }
    let root: Value = serde_json::from_str(text).map_err(|e| schema("<file>", "$", e.to_string()))?;
    let (version, header, raw) = match root {
        Value::Array(items) => (HATTE_VERSION.to_string(), SuiteHeader::default(), items),
        Value::Object(mut m) => {
            let version = match m.remove("hatte_version") {
                Some(Value::String(v)) => v,
                Some(_) => return Err(schema("<file>", "hatte_version", "must be a string")),
                None => return Err(schema("<file>", "hatte_version", "missing")),
            };
            let header = match m.remove("header") {
                Some(h) => serde_path_to_error::deserialize(h)
                    .map_err(|e| schema("<file>", format!("header.{}", e.path()), e.inner().to_string()))?,
                None => SuiteHeader::default(),
            };
            let Some(Value::Array(items)) = m.remove("scenarios") else {
                return Err(schema("<file>", "scenarios", "missing or not an array"));
            };
            (version, header, items)
        }
        _ => return Err(schema("<file>", "$", "expected an object or an array")),
    };
    if raw.is_empty() {
        return Err(schema("<file>", "scenarios", "no scenarios"));
    }
    let mut scenarios = Vec::with_capacity(raw.len());
    let mut seen = BTreeSet::new();
    for (i, item) in raw.into_iter().enumerate() {
        let id = item
            .get("id")
            .and_then(Value::as_str)
            .map_or_else(|| format!("#{i}"), str::to_string);
        let sc: Scenario = serde_path_to_error::deserialize(item)
            .map_err(|e| schema(&id, e.path().to_string(), e.inner().to_string()))?;
        if !seen.insert(sc.id.clone()) {
            return Err(schema(&id, "id", "duplicate scenario id"));
        }
        validate_scenario(&sc)?;
        scenarios.push(sc);
    }
    Ok(SuiteFile {
        hatte_version: version,
        header,
        scenarios,
    })
}

/// Structural checks plus ground-truth resolvability against the
/// scenario's initial world.
pub fn validate_scenario(sc: &Scenario) -> Result<(), SchemaError> {
    let id = sc.id.as_str();
    if id.is_empty() {
        return Err(schema("#", "id", "empty id"));
    }
    if !is_category(&sc.category) {
        return Err(schema(id, "category", format!("unknown category {:?}", sc.category)));
    }
    if !(2..=3).contains(&sc.turns.len()) {
        return Err(schema(id, "turns", format!("expected 2 or 3 turns, found {}", sc.turns.len())));
    }
    let testbed = sc
        .sim_config
        .build()
        .map_err(|e| schema(id, "sim_config", e.to_string()))?;
    for (t, turn) in sc.turns.iter().enumerate() {
        let f = |field: &str| format!("turns[{t}].{field}");
        if turn.utterance.trim().is_empty() {
            return Err(schema(id, f("utterance"), "empty utterance"));
        }
        if turn.reference_plans.is_empty() {
            return Err(schema(id, f("reference_plans"), "at least one reference plan is required"));
        }
        for (p, plan) in turn.reference_plans.iter().enumerate() {
            let mut labels = BTreeSet::new();
            for (s, label) in plan.iter().enumerate() {
                if label_family(label).is_none() {
                    return Err(schema(id, f(&format!("reference_plans[{p}][{s}]")), format!("bad step label {label:?}")));
                }
                if !labels.insert(label) {
                    return Err(schema(id, f(&format!("reference_plans[{p}][{s}]")), "duplicate step label"));
                }
            }
        }
        for (c, call) in turn.reference_tool_calls.iter().enumerate() {
            let field = f(&format!("reference_tool_calls[{c}].tool"));
            let Some(family) = tool_family(&call.tool) else {
                return Err(schema(id, field, format!("unknown tool {:?}", call.tool)));
            };
            if !sc.persona.allows(family) {
                return Err(schema(id, field, "tool family not available to this persona"));
            }
        }
        if let GroundTruth::Deterministic { path, params, pointer, tolerance, .. } = &turn.ground_truth {
            let gt = |field: &str| f(&format!("ground_truth.{field}"));
            if !(tolerance.is_finite() && *tolerance >= 0.0) {
                return Err(schema(id, gt("tolerance"), "must be a non-negative number"));
            }
            if !pointer.is_empty() && !pointer.starts_with('/') {
                return Err(schema(id, gt("pointer"), "must be a JSON pointer"));
            }
            let mut all = params.clone();
            all.insert("path".into(), Value::String(path.clone()));
            let tool = if path.ends_with("/_all") { "knowledge_list" } else { "knowledge_get" };
            let query = knowledge_query(tool, &all).map_err(|e| schema(id, gt("path"), e))?;
            testbed
                .query_uncached(&query)
                .map_err(|e| schema(id, gt("path"), e.to_string()))?;
        }
    }
    Ok(())
}

/// Index of the reference call that reads the ground-truth path.
pub fn ground_truth_call(turn: &ScenarioTurn) -> Option<usize> {
    let GroundTruth::Deterministic { path, params, .. } = &turn.ground_truth else {
        return None;
    };
    turn.reference_tool_calls.iter().rposition(|c| {
        matches!(tool_family(&c.tool), Some(ToolFamily::KnowledgeGet | ToolFamily::KnowledgeList))
            && c.required_params.get("path").and_then(Value::as_str) == Some(path.as_str())
            && params.iter().all(|(k, v)| c.required_params.get(k) == Some(v))
    })
}
