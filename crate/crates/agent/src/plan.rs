//! Plans and the template planner used by the heuristic backend.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::intent::{EntityKind, Intent};
use crate::tools::{label_family, step_label, tool_family, Params, ToolFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Persona {
    Engineer,
    User,
}

impl Persona {
    pub fn allows(self, family: ToolFamily) -> bool {
        self == Persona::Engineer || family != ToolFamily::SimControl
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolBinding {
    pub tool: String,
    pub params: Params,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub description: String,
    /// `None` for the closing respond/synthesize step.
    pub tool_family: Option<ToolFamily>,
    pub binding: Option<ToolBinding>,
    /// Normalized `family:label` used for plan scoring.
    pub label: String,
}

impl PlanStep {
    pub fn tool(tool: &str, params: Params) -> Self {
        let label = step_label(tool, &params);
        let description = match params.get("path").and_then(Value::as_str) {
            Some(p) => format!("{tool} {p}"),
            None => tool.to_string(),
        };
        Self {
            description,
            tool_family: tool_family(tool),
            binding: Some(ToolBinding {
                tool: tool.to_string(),
                params,
            }),
            label,
        }
    }

    /// An unbound step known only by its label.
    pub fn from_label(label: &str) -> Self {
        Self {
            description: label.to_string(),
            tool_family: label_family(label),
            binding: None,
            label: label.to_string(),
        }
    }

    pub fn synthesize() -> Self {
        Self {
            description: "synthesize the response".into(),
            tool_family: None,
            binding: None,
            label: "synthesize".into(),
        }
    }

    pub fn is_tool_step(&self) -> bool {
        self.tool_family.is_some()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Plan {
    /// Labels of tool steps, in order. The synthesize step is not scored.
    pub fn labels(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter(|s| s.is_tool_step())
            .map(|s| s.label.clone())
            .collect()
    }

    pub fn tool_steps(&self) -> impl Iterator<Item = &PlanStep> {
        self.steps.iter().filter(|s| s.is_tool_step())
    }

    /// Builds a plan from labels, appending a synthesize step when any
    /// tool step is present.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut steps: Vec<PlanStep> = labels.iter().map(|l| PlanStep::from_label(l.as_ref())).collect();
        if !steps.is_empty() {
            steps.push(PlanStep::synthesize());
        }
        Plan { steps, notes: Vec::new() }
    }

    /// Removes steps the persona may not delegate, noting each refusal.
    pub fn restrict_to(mut self, persona: Persona) -> Self {
        let mut notes = Vec::new();
        self.steps.retain(|s| match s.tool_family {
            Some(f) if !persona.allows(f) => {
                notes.push(format!("delegation refused for {} persona: {}", persona_name(persona), s.label));
                false
            }
            _ => true,
        });
        if self.steps.iter().all(|s| !s.is_tool_step()) {
            self.steps.retain(PlanStep::is_tool_step);
        }
        self.notes.extend(notes);
        self
    }
}

fn persona_name(p: Persona) -> &'static str {
    match p {
        Persona::Engineer => "engineer",
        Persona::User => "user",
    }
}

/// Placeholder resolved at execution time from the latest profiling result.
pub const RECOMMENDED: &str = "{recommended}";

/// Step templates per category. `get`/`list` read knowledge paths; other
/// verbs name a tool. `{ue}`, `{cell}`, `{bs}`, `{service}`, `{slice}`,
/// `{server}` bind to the first entity of that kind; `{ticks}`, `{prbs}`,
/// `{window}`, `{modality}`, `{latency}`, `{tier}` come from the utterance.
pub const PLAN_TEMPLATES: [(&str, &[&str]); 50] = [
    ("ue_status_monitoring", &["get ue/{ue}/status"]),
    ("throughput_analysis", &["get ue/{ue}/status", "get cell/{cell}/kpi"]),
    ("congestion_analysis", &["list cell/_all", "get cell/{cell}/kpi"]),
    ("capacity_planning", &["list cell/_all"]),
    ("backhaul_analysis", &["get bs/{bs}/summary"]),
    ("ai_services_management", &["list ai_service/_all"]),
    ("fault_prediction", &["get cell/{cell}/history?window={window}", "get cell/{cell}/kpi"]),
    ("fault_diagnosis", &["get cell/{cell}/kpi", "get cell/{cell}/load", "list ue/_all?cell={cell}"]),
    ("general_query", &[]),
    ("handover_analysis", &["get ue/{ue}/status"]),
    ("signal_quality_analysis", &["get ue/{ue}/status"]),
    ("cell_load_monitoring", &["get cell/{cell}/load"]),
    ("load_balancing", &["list cell/_all", "get ric/xapps"]),
    ("interference_analysis", &["get cell/{cell}/kpi"]),
    ("mobility_tracking", &["get ue/{ue}/history?window={window}"]),
    ("slice_management", &["get slice/{slice}/members"]),
    ("slice_performance", &["list slice/_all"]),
    ("prb_allocation", &["get cell/{cell}/load"]),
    ("qos_verification", &["get cell/{cell}/kpi"]),
    ("ric_xapp_status", &["get ric/xapps"]),
    ("ric_subscription_audit", &["get ric/subscriptions"]),
    ("edge_server_utilization", &["get edge_server/{server}/utilization"]),
    ("ai_service_deployment", &["profile_services", "subscribe_service service={service}"]),
    ("ai_service_teardown", &["unsubscribe_service service={service}"]),
    ("service_recommendation", &["profile_services"]),
    ("base_station_summary", &["get bs/{bs}/summary"]),
    ("coverage_analysis", &["list ue/_all"]),
    ("traffic_demand_analysis", &["get cell/{cell}/kpi"]),
    ("network_overview", &["list cell/_all"]),
    ("kpi_reporting", &["get cell/{cell}/kpi"]),
    ("anomaly_detection", &["list cell/_all"]),
    ("trend_analysis", &["get cell/{cell}/history?window={window}"]),
    ("handover_control", &["handover_command ue={ue} target_cell={cell}"]),
    ("resource_quota_tuning", &["set_prb_quota cell={cell} prbs={prbs}"]),
    ("simulation_control", &["sim_advance ticks={ticks}"]),
    ("cell_comparison", &["list cell/_all"]),
    ("ue_distribution", &["list cell/_all"]),
    ("service_health_check", &["get ai_service/{service}/status"]),
    ("latency_requirement_matching", &["profile_services"]),
    ("topology_query", &["list bs/_all"]),
    ("neighbor_cell_analysis", &["get ue/{ue}/status"]),
    ("sla_compliance", &["list slice/_all"]),
    ("user_experience_analysis", &["get ue/{ue}/status"]),
    ("edge_placement_analysis", &["get ai_service/{service}/status"]),
    ("deployment_status_tracking", &["get ai_service/{service}/status"]),
    ("root_cause_analysis", &["get cell/{cell}/kpi"]),
    ("what_if_analysis", &["list cell/_all"]),
    ("performance_optimization", &["list cell/_all"]),
    ("alarm_triage", &["get ric/xapps"]),
    ("configuration_audit", &["get ric/xapps", "list edge_server/_all"]),
];

pub fn template_for(category: &str) -> &'static [&'static str] {
    PLAN_TEMPLATES
        .iter()
        .find(|(c, _)| *c == category)
        .map_or(&[], |(_, t)| t)
}

/// Numeric and enum slots lifted from the utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Slots {
    pub ticks: u64,
    pub prbs: u64,
    pub window: u64,
    pub modality: &'static str,
    pub latency: &'static str,
    pub tier: u64,
}

static TICKS_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d+)\s*ticks?\b").expect("regex"));
static PRBS_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d+)\s*prbs?\b").expect("regex"));
static TIER_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\btier\s*(\d+)\b").expect("regex"));

pub fn extract_slots(utterance: &str) -> Slots {
    let num = |re: &Regex, default: u64| {
        re.captures(utterance)
            .and_then(|c| c[1].parse().ok())
            .unwrap_or(default)
    };
    let lower = utterance.to_ascii_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| lower.contains(w));
    let modality = if has(&["speech", "text", "chat", "language", "nlp", "transcri", "summar"]) {
        "nlp"
    } else if has(&["forecast", "predict", "anomal", "time series"]) {
        "predictive"
    } else {
        "vision"
    };
    let latency = if has(&["real-time", "realtime", "real time", "instant"]) {
        "realtime"
    } else if has(&["interactive", "responsive", "low latency"]) {
        "interactive"
    } else {
        "batch"
    };
    let ticks = num(&TICKS_RE, 10);
    Slots {
        ticks,
        prbs: num(&PRBS_RE, 50),
        window: ticks,
        modality,
        latency,
        tier: num(&TIER_RE, 1),
    }
}

/// Expands the category template for `intent`. Missing entity ids turn a
/// single-entity read into the matching collection read, drop unbound
/// filters, and drop control steps with a note.
pub fn template_plan(intent: &Intent, utterance: &str, persona: Persona) -> Plan {
    let slots = extract_slots(utterance);
    let mut plan = Plan::default();
    for raw in template_for(&intent.category) {
        match expand_step(raw, intent, &slots) {
            Ok(step) => plan.steps.push(step),
            Err(note) => plan.notes.push(note),
        }
    }
    if plan.steps.iter().any(PlanStep::is_tool_step) {
        plan.steps.push(PlanStep::synthesize());
    }
    plan.restrict_to(persona)
}

fn entity_slot(name: &str) -> Option<EntityKind> {
    EntityKind::ALL.into_iter().find(|k| k.as_str() == name)
}

fn fill(raw: &str, intent: &Intent, slots: &Slots) -> (String, Vec<EntityKind>) {
    let mut out = String::new();
    let mut missing = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else {
            break;
        };
        out.push_str(&rest[..open]);
        let name = &rest[open + 1..open + close];
        let value = match name {
            "ticks" => slots.ticks.to_string(),
            "prbs" => slots.prbs.to_string(),
            "window" => slots.window.to_string(),
            "modality" => slots.modality.to_string(),
            "latency" => slots.latency.to_string(),
            "tier" => slots.tier.to_string(),
            other => match entity_slot(other) {
                Some(kind) => match intent.first(kind) {
                    Some(id) => id.to_string(),
                    None => {
                        missing.push(kind);
                        format!("{{{other}}}")
                    }
                },
                None => format!("{{{other}}}"),
            },
        };
        out.push_str(&value);
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    (out, missing)
}

fn parse_value(s: &str) -> Value {
    s.parse::<u64>().map_or_else(|_| json!(s), |n| json!(n))
}

fn expand_step(raw: &str, intent: &Intent, slots: &Slots) -> Result<PlanStep, String> {
    let (verb, rest) = raw.split_once(' ').unwrap_or((raw, ""));
    match verb {
        "get" | "list" => {
            let (path_t, query_t) = rest.split_once('?').unwrap_or((rest, ""));
            let (path, missing) = fill(path_t, intent, slots);
            let mut params = Params::new();
            let bulk = !missing.is_empty() || verb == "list";
            let path = if missing.is_empty() {
                path
            } else {
                format!("{}/_all", missing[0].path_prefix())
            };
            let collection_params = collection_params(&path);
            params.insert("path".into(), json!(path));
            for pair in query_t.split('&').filter(|p| !p.is_empty()) {
                let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
                let (v, missing) = fill(v, intent, slots);
                let usable = missing.is_empty() && (!bulk || collection_params.contains(&k));
                if usable {
                    params.insert(k.into(), parse_value(&v));
                }
            }
            let tool = if bulk { "knowledge_list" } else { "knowledge_get" };
            Ok(PlanStep::tool(tool, params))
        }
        tool => {
            let mut params = Params::new();
            for pair in rest.split_whitespace() {
                let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
                let (v, missing) = fill(v, intent, slots);
                if !missing.is_empty() {
                    if tool == "subscribe_service" && k == "service" {
                        params.insert(k.into(), json!(RECOMMENDED));
                        continue;
                    }
                    return Err(format!("{tool} skipped: no {} id in the request", missing[0]));
                }
                params.insert(k.into(), parse_value(&v));
            }
            if tool == "profile_services" {
                params.insert("modality".into(), json!(slots.modality));
                params.insert("max_latency_class".into(), json!(slots.latency));
                params.insert("min_accuracy_tier".into(), json!(slots.tier));
            }
            Ok(PlanStep::tool(tool, params))
        }
    }
}

fn collection_params(path: &str) -> &'static [&'static str] {
    match path {
        "ue/_all" => &["cell", "slice"],
        _ => &[],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::{classify_intent, is_category, EntityRef};

    fn plan_for(utterance: &str, persona: Persona) -> Plan {
        let intent = classify_intent(utterance, &[]).unwrap();
        template_plan(&intent, utterance, persona)
    }

    #[test]
    fn every_category_has_a_template() {
        for (c, _) in PLAN_TEMPLATES {
            assert!(is_category(c), "{c}");
        }
        assert_eq!(PLAN_TEMPLATES.len(), 50);
    }

    #[test]
    fn fault_diagnosis_on_sector_three() {
        let p = plan_for("Why is sector 3 dropping packets?", Persona::Engineer);
        assert_eq!(
            p.labels(),
            ["knowledge_get:cell_kpi", "knowledge_get:cell_load", "knowledge_list:ue_all"]
        );
        let b = p.steps[2].binding.as_ref().unwrap();
        assert_eq!(b.params["cell"], json!(3));
        assert_eq!(p.steps.last().unwrap().label, "synthesize");
    }

    #[test]
    fn general_query_has_no_tool_steps() {
        let p = plan_for("hello", Persona::Engineer);
        assert!(p.steps.is_empty());
    }

    #[test]
    fn missing_entity_falls_back_to_collection() {
        let intent = Intent {
            category: "fault_diagnosis".into(),
            entities: vec![],
            confidence: 1.0,
        };
        let p = template_plan(&intent, "why is it dropping", Persona::Engineer);
        assert_eq!(p.labels(), ["knowledge_list:cell_all", "knowledge_list:cell_all", "knowledge_list:ue_all"]);
        assert!(!p.steps[2].binding.as_ref().unwrap().params.contains_key("cell"));
    }

    #[test]
    fn user_persona_loses_sim_control() {
        let p = plan_for("advance the simulation 5 ticks", Persona::User);
        assert!(p.steps.is_empty());
        assert_eq!(p.notes.len(), 1);
        let p = plan_for("advance the simulation 5 ticks", Persona::Engineer);
        assert_eq!(p.steps[0].binding.as_ref().unwrap().params["ticks"], json!(5));
    }

    #[test]
    fn deployment_uses_recommendation_when_unnamed() {
        let p = plan_for("I need real-time object detection at tier 4", Persona::User);
        assert_eq!(p.labels(), ["deploy_pipeline:profile_services", "deploy_pipeline:subscribe_service"]);
        let prof = &p.steps[0].binding.as_ref().unwrap().params;
        assert_eq!(prof["max_latency_class"], json!("realtime"));
        assert_eq!(prof["min_accuracy_tier"], json!(4));
        assert_eq!(p.steps[1].binding.as_ref().unwrap().params["service"], json!(RECOMMENDED));
    }

    #[test]
    fn control_step_without_ids_is_dropped() {
        let intent = Intent {
            category: "handover_control".into(),
            entities: vec![EntityRef::new(EntityKind::Ue, 4)],
            confidence: 1.0,
        };
        let p = template_plan(&intent, "hand over ue 4", Persona::Engineer);
        assert!(p.steps.is_empty());
        assert_eq!(p.notes.len(), 1);
    }
}
