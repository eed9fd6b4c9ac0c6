//! Deterministic claim extraction and grounding against recorded tool calls.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::intent::{EntityKind, EntityRef, KIND_WORDS};
use crate::session::ToolCall;

/// Relative tolerance for numeric grounding.
pub const NUMERIC_TOLERANCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClaimValue {
    Number(f64),
    Entity(EntityRef),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub span: String,
    pub value: ClaimValue,
    /// Id of the first tool call whose result supports the claim.
    pub grounding: Option<String>,
}

static ENTITY_SPAN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\b({KIND_WORDS})[\s#:-]*(\d+)\b")).expect("valid claim regex")
});

/// Entity claims first, then every decimal literal outside an entity span.
pub fn extract_claims(text: &str) -> Vec<(String, ClaimValue)> {
    let mut out = Vec::new();
    let mut taken: Vec<(usize, usize)> = Vec::new();
    for cap in ENTITY_SPAN.captures_iter(text) {
        let whole = cap.get(0).expect("group 0");
        let (Some(kind), Ok(id)) = (EntityKind::from_word(&cap[1]), cap[2].parse::<u32>()) else {
            continue;
        };
        taken.push((whole.start(), whole.end()));
        out.push((whole.as_str().to_string(), ClaimValue::Entity(EntityRef::new(kind, id))));
    }
    for (start, end) in number_spans(text) {
        if taken.iter().any(|&(s, e)| start < e && end > s) {
            continue;
        }
        let span = &text[start..end];
        if let Ok(v) = span.parse::<f64>() {
            out.push((span.to_string(), ClaimValue::Number(v)));
        }
    }
    out
}

/// Byte ranges of `-?digits(.digits)?` not glued to identifiers.
fn number_spans(text: &str) -> Vec<(usize, usize)> {
    let b = text.as_bytes();
    let word = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    let mut spans = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_digit() || (i > 0 && (word(b[i - 1]) || b[i - 1] == b'.')) {
            i += 1;
            continue;
        }
        let mut start = i;
        if i > 0 && b[i - 1] == b'-' && (i < 2 || !word(b[i - 2])) {
            start = i - 1;
        }
        let mut end = i;
        while end < b.len() && b[end].is_ascii_digit() {
            end += 1;
        }
        if end + 1 < b.len() && b[end] == b'.' && b[end + 1].is_ascii_digit() {
            end += 1;
            while end < b.len() && b[end].is_ascii_digit() {
                end += 1;
            }
        }
        let glued = end < b.len() && (word(b[end]) || (b[end] == b'.' && end + 1 < b.len() && word(b[end + 1])));
        if !glued {
            spans.push((start, end));
        }
        i = end;
    }
    spans
}

/// Extracts claims and grounds each against successful tool results.
pub fn ground_claims(text: &str, calls: &[ToolCall]) -> Vec<Claim> {
    extract_claims(text)
        .into_iter()
        .map(|(span, value)| {
            let grounding = calls
                .iter()
                .find(|c| supports(c, &value))
                .map(|c| c.id.clone());
            Claim { span, value, grounding }
        })
        .collect()
}

pub fn supports(call: &ToolCall, value: &ClaimValue) -> bool {
    let Some(payload) = call.result.value() else {
        return false;
    };
    match value {
        ClaimValue::Number(x) => numeric_leaves(payload).any(|v| numbers_match(*x, v)),
        ClaimValue::Entity(e) => entity_in_payload(payload, *e) || entity_in_params(call, *e),
    }
}

pub fn numbers_match(claimed: f64, actual: f64) -> bool {
    numbers_match_within(claimed, actual, NUMERIC_TOLERANCE)
}

pub fn numbers_match_within(claimed: f64, actual: f64, tolerance: f64) -> bool {
    (claimed - actual).abs() <= tolerance * actual.abs()
}

pub fn numeric_leaves(v: &Value) -> Box<dyn Iterator<Item = f64> + '_> {
    match v {
        Value::Number(n) => Box::new(n.as_f64().into_iter()),
        Value::Array(a) => Box::new(a.iter().flat_map(numeric_leaves)),
        Value::Object(o) => Box::new(o.values().flat_map(numeric_leaves)),
        _ => Box::new(std::iter::empty()),
    }
}

fn key_names_kind(key: &str, kind: EntityKind) -> bool {
    let names = [kind.as_str(), kind.path_prefix()];
    names.iter().any(|k| {
        key == *k
            || key.strip_suffix('s') == Some(k)
            || key == format!("{k}_id")
            || key == format!("{k}_ids")
            || key.ends_with(&format!("_{k}"))
            || key.ends_with(&format!("_{k}s"))
    })
}

fn id_matches(v: &Value, id: u32) -> bool {
    match v {
        Value::Number(n) => n.as_u64() == Some(u64::from(id)),
        Value::String(s) => s.parse::<u32>().ok() == Some(id),
        Value::Array(a) => a.iter().any(|x| matches!(x, Value::Number(_) | Value::String(_)) && id_matches(x, id)),
        _ => false,
    }
}

fn entity_in_payload(v: &Value, e: EntityRef) -> bool {
    match v {
        Value::Object(o) => o
            .iter()
            .any(|(k, x)| (key_names_kind(k, e.kind) && id_matches(x, e.id)) || entity_in_payload(x, e)),
        Value::Array(a) => a.iter().any(|x| entity_in_payload(x, e)),
        _ => false,
    }
}

fn entity_in_params(call: &ToolCall, e: EntityRef) -> bool {
    if let Some(path) = call.params.get("path").and_then(Value::as_str) {
        let segs: Vec<&str> = path.split('/').collect();
        if segs.windows(2).any(|w| {
            EntityKind::from_path_prefix(w[0]) == Some(e.kind) && w[1].parse::<u32>().ok() == Some(e.id)
        }) {
            return true;
        }
    }
    call.params
        .iter()
        .any(|(k, v)| key_names_kind(k, e.kind) && id_matches(v, e.id))
}

/// Number formatting shared by templates: integers without decimals,
/// otherwise up to four decimals with trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// [`fmt_num`] over a JSON value; strings verbatim, null as "n/a".
pub fn fmt_value(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), fmt_num),
        Value::String(s) => s.clone(),
        Value::Null => "n/a".into(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}
