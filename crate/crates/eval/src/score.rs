//! The three scoring layers and the hallucination detector.

use std::collections::{BTreeSet, HashMap};

use airan_agent::claims::numbers_match_within;
use airan_agent::tools::{param_string, Params};
use airan_agent::{ClaimValue, EntityRef, ToolFamily, Turn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::scenario::ReferenceCall;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub planning_fidelity: f64,
    pub tool_accuracy: f64,
    pub e2e_success: f64,
    pub hallucinated: bool,
}

impl LayerScores {
    pub fn mean(&self) -> f64 {
        (self.planning_fidelity + self.tool_accuracy + self.e2e_success) / 3.0
    }
}

/// Set F1 between two label lists. Two empty plans agree perfectly.
pub fn set_f1<S: AsRef<str>, T: AsRef<str>>(agent: &[S], reference: &[T]) -> f64 {
    let a: BTreeSet<&str> = agent.iter().map(AsRef::as_ref).collect();
    let r: BTreeSet<&str> = reference.iter().map(AsRef::as_ref).collect();
    if a.is_empty() && r.is_empty() {
        return 1.0;
    }
    if a.is_empty() || r.is_empty() {
        return 0.0;
    }
    let hit = a.intersection(&r).count() as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let p = hit / a.len() as f64;
    let rc = hit / r.len() as f64;
    2.0 * p * rc / (p + rc)
}

/// Maximum set-F1 of the agent's plan labels over the reference plans,
/// with the index of the best plan (first on ties).
pub fn score_planning_labels(agent: &[String], reference_plans: &[Vec<String>]) -> (f64, Option<usize>) {
    let mut best: (f64, Option<usize>) = (0.0, None);
    for (i, plan) in reference_plans.iter().enumerate() {
        let f = set_f1(agent, plan);
        if best.1.is_none() || f > best.0 {
            best = (f, Some(i));
        }
    }
    best
}

pub fn score_planning(turn: &Turn, reference_plans: &[Vec<String>]) -> f64 {
    score_planning_labels(&turn.plan.labels(), reference_plans).0
}

fn params_satisfy(actual: &Params, required: &Params) -> bool {
    required
        .iter()
        .all(|(k, v)| actual.get(k).is_some_and(|a| param_string(a) == param_string(v)))
}

/// Fraction of reference calls covered one-to-one by correct agent calls:
/// same tool, required params equal, non-error result, and knowledge reads
/// verified against an uncached route.
pub fn score_tool_use(turn: &Turn, reference: &[ReferenceCall]) -> f64 {
    if reference.is_empty() {
        return 1.0;
    }
    let mut used = vec![false; turn.tool_calls.len()];
    let mut covered = 0usize;
    for r in reference {
        let hit = turn.tool_calls.iter().enumerate().position(|(i, c)| {
            !used[i]
                && c.tool == r.tool
                && params_satisfy(&c.params, &r.required_params)
                && c.result.is_ok()
                && match c.family {
                    ToolFamily::KnowledgeGet | ToolFamily::KnowledgeList => c.verified == Some(true),
                    _ => c.verified != Some(false),
                }
        });
        if let Some(i) = hit {
            used[i] = true;
            covered += 1;
        }
    }
    (covered as f64 / reference.len() as f64).min(1.0)
}

/// Resolved deterministic target.
#[derive(Clone, Debug, PartialEq)]
pub enum Expected {
    Number(f64),
    Entity(EntityRef),
    Text(String),
}

/// 1 when a grounded claim matches the expected value (numbers within the
/// relative tolerance, entities exactly); text targets must appear verbatim.
pub fn score_deterministic(turn: &Turn, expected: Option<&Expected>, tolerance: f64) -> f64 {
    let Some(expected) = expected else {
        return 0.0;
    };
    let mut grounded = turn.response.claims.iter().filter(|c| c.grounding.is_some());
    let hit = match expected {
        Expected::Number(e) => grounded
            .filter_map(|c| match c.value {
                ClaimValue::Number(x) => Some(x),
                ClaimValue::Entity(_) => None,
            })
            .any(|x| numbers_match_within(x, *e, tolerance)),
        Expected::Entity(e) => grounded.any(|c| c.value == ClaimValue::Entity(*e)),
        Expected::Text(s) => turn.response.text.contains(s.as_str()),
    };
    f64::from(u8::from(hit))
}

pub fn expected_from_value(v: &Value, entity: Option<airan_agent::EntityKind>) -> Option<Expected> {
    match (v, entity) {
        (Value::Number(n), Some(kind)) => Some(Expected::Entity(EntityRef::new(kind, u32::try_from(n.as_u64()?).ok()?))),
        (Value::Number(n), None) => n.as_f64().map(Expected::Number),
        (Value::String(s), _) => Some(Expected::Text(s.clone())),
        (Value::Bool(b), _) => Some(Expected::Text(b.to_string())),
        _ => None,
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "do", "does", "for", "from", "has",
    "have", "how", "i", "if", "in", "into", "is", "it", "its", "no", "not", "of", "on", "or", "so", "such",
    "that", "the", "their", "then", "there", "these", "they", "this", "to", "was", "we", "were", "what",
    "when", "which", "while", "who", "will", "with", "you", "your",
];

pub fn content_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        .map(str::to_string)
        .collect()
}

/// Bag-of-tokens F1 after lowercasing and stopword removal.
pub fn token_f1(response: &str, reference: &str) -> f64 {
    let a = content_tokens(response);
    let b = content_tokens(reference);
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &b {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &a {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / a.len() as f64;
    let r = overlap as f64 / b.len() as f64;
    2.0 * p * r / (p + r)
}

/// Rubric passes when the judge score reaches this value.
pub const RUBRIC_PASS: f64 = 0.5;

/// Rubric judge returning a score in [0, 1].
pub trait Judge: Send + Sync {
    fn score(&self, response: &str, reference: &str) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TokenF1Judge;

impl Judge for TokenF1Judge {
    fn score(&self, response: &str, reference: &str) -> f64 {
        token_f1(response, reference)
    }
}

/// Consensus over several judges: the median score (lower median for an
/// even count).
pub struct MajorityJudge {
    pub judges: Vec<Box<dyn Judge>>,
}

impl Judge for MajorityJudge {
    fn score(&self, response: &str, reference: &str) -> f64 {
        let mut s: Vec<f64> = self.judges.iter().map(|j| j.score(response, reference)).collect();
        if s.is_empty() {
            return 0.0;
        }
        s.sort_by(f64::total_cmp);
        s[(s.len() - 1) / 2]
    }
}

pub fn score_rubric(turn: &Turn, reference_answer: &str, judge: &dyn Judge) -> f64 {
    judge.score(&turn.response.text, reference_answer).clamp(0.0, 1.0)
}

/// True iff any response claim lacks grounding.
pub fn detect_hallucination(turn: &Turn) -> bool {
    turn.response.claims.iter().any(|c| c.grounding.is_none())
}
