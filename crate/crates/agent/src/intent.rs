//! Keyword/entity intent classification over the closed category label set.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::AgentError;

/// Fallback category for utterances no keyword rule recognises.
pub const GENERAL_QUERY: &str = "general_query";

/// Category labels with their keyword phrases. A phrase scores its word
/// count when it appears on word boundaries; the highest total wins and
/// ties go to the earlier row.
pub const CATEGORIES: [(&str, &[&str]); 50] = [
    ("ue_status_monitoring", &["ue status", "status of ue", "how is ue", "ue doing", "is ue connected", "check ue"]),
    ("throughput_analysis", &["throughput", "data rate", "bitrate", "mbps"]),
    ("congestion_analysis", &["congested", "congestion", "overloaded", "most loaded", "busiest"]),
    ("capacity_planning", &["capacity planning", "plan capacity", "capacity", "headroom", "future demand"]),
    ("backhaul_analysis", &["backhaul", "transport link", "fronthaul"]),
    ("ai_services_management", &["ai services", "manage services", "service catalog", "service instances", "services are deployed"]),
    ("fault_prediction", &["predict", "prediction", "likely to fail", "will fail", "before it fails", "at risk"]),
    ("fault_diagnosis", &["dropping", "packet loss", "why is", "what is wrong", "diagnose", "problem with"]),
    (GENERAL_QUERY, &[]),
    ("handover_analysis", &["handover", "handovers", "ping pong", "handoff"]),
    ("signal_quality_analysis", &["sinr", "rsrp", "signal quality", "signal strength", "weak signal"]),
    ("cell_load_monitoring", &["cell load", "load of cell", "how loaded", "load on cell"]),
    ("load_balancing", &["balance", "rebalance", "load balancing", "even out", "offload"]),
    ("interference_analysis", &["interference", "interfering", "noise"]),
    ("mobility_tracking", &["moving", "mobility", "trajectory", "where has", "position history", "track ue"]),
    ("slice_management", &["slice members", "which slice", "slices", "slice membership", "members of slice"]),
    ("slice_performance", &["slice throughput", "slice performance", "per slice", "performing slice"]),
    ("prb_allocation", &["prb allocation", "resource blocks", "allocated prbs", "scheduler", "prbs allocated"]),
    ("qos_verification", &["qos", "quality of service", "meeting demand", "demand met", "unserved"]),
    ("ric_xapp_status", &["xapp", "xapps", "ric", "near-rt"]),
    ("ric_subscription_audit", &["subscriptions", "subscribed", "who is subscribed", "subscription list"]),
    ("edge_server_utilization", &["edge server", "server utilization", "gpu usage", "cpu usage", "compute usage"]),
    ("ai_service_deployment", &["deploy", "launch", "start service", "spin up", "i need", "subscribe me"]),
    ("ai_service_teardown", &["unsubscribe", "stop service", "tear down", "teardown", "no longer need", "remove service"]),
    ("service_recommendation", &["recommend", "which model", "suggest", "best service", "options for"]),
    ("base_station_summary", &["base station", "gnb", "site summary", "bs summary"]),
    ("coverage_analysis", &["coverage", "coverage hole", "dead zone", "edge of coverage"]),
    ("traffic_demand_analysis", &["traffic demand", "demand", "traffic load", "how much traffic"]),
    ("network_overview", &["overview", "overall network", "whole network", "network status"]),
    ("kpi_reporting", &["kpi", "kpis", "key performance", "report on cell"]),
    ("anomaly_detection", &["anomaly", "anomalies", "unusual", "abnormal", "outlier"]),
    ("trend_analysis", &["trend", "over time", "history", "last ticks", "recently"]),
    ("handover_control", &["hand over", "move ue", "force handover", "handover command", "transfer ue"]),
    ("resource_quota_tuning", &["quota", "limit prbs", "cap prbs", "set prb", "restrict"]),
    ("simulation_control", &["advance", "run the simulation", "step the simulation", "ticks forward", "fast forward"]),
    ("cell_comparison", &["compare cells", "compare", "versus", "difference between"]),
    ("ue_distribution", &["distribution of ues", "how many ues", "ue count", "ues per cell", "attached ues"]),
    ("service_health_check", &["healthy", "health of service", "service status", "is service running", "service up"]),
    ("latency_requirement_matching", &["latency", "realtime", "real-time", "low latency", "response time"]),
    ("topology_query", &["topology", "layout", "which cells belong", "cells of", "sites"]),
    ("neighbor_cell_analysis", &["neighbor cell", "neighbour", "best neighbor", "alternative cell", "neighbor"]),
    ("sla_compliance", &["sla", "service level", "guarantee", "compliance"]),
    ("user_experience_analysis", &["experience", "user experience", "complaining", "slow for", "my connection"]),
    ("edge_placement_analysis", &["placement", "which server", "where is service", "hosted on", "placed"]),
    ("deployment_status_tracking", &["deployment status", "pulling", "pending", "rollout", "deployment progress"]),
    ("root_cause_analysis", &["root cause", "cause of", "why did", "explain the drop"]),
    ("what_if_analysis", &["what if", "what happens if", "simulate", "hypothetical"]),
    ("performance_optimization", &["optimize", "optimise", "improve performance", "tune", "tuning"]),
    ("alarm_triage", &["alarm", "alarms", "alert", "alerts", "errors", "triage"]),
    ("configuration_audit", &["configuration", "config", "audit", "settings", "parameters"]),
];

pub fn category_labels() -> impl Iterator<Item = &'static str> {
    CATEGORIES.iter().map(|(l, _)| *l)
}

pub fn is_category(label: &str) -> bool {
    category_labels().any(|l| l == label)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Ue,
    Cell,
    Bs,
    Service,
    Slice,
    Server,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Ue,
        EntityKind::Cell,
        EntityKind::Bs,
        EntityKind::Service,
        EntityKind::Slice,
        EntityKind::Server,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Ue => "ue",
            EntityKind::Cell => "cell",
            EntityKind::Bs => "bs",
            EntityKind::Service => "service",
            EntityKind::Slice => "slice",
            EntityKind::Server => "server",
        }
    }

    /// Canonical knowledge path prefix for this kind.
    pub fn path_prefix(self) -> &'static str {
        match self {
            EntityKind::Service => "ai_service",
            EntityKind::Server => "edge_server",
            other => other.as_str(),
        }
    }

    pub fn from_path_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.path_prefix() == prefix)
    }

    /// Maps a surface word ("sector", "gNB", "base station") to its kind.
    pub fn from_word(word: &str) -> Option<Self> {
        let w = word.to_ascii_lowercase();
        Some(match w.split_whitespace().last()? {
            "ue" => EntityKind::Ue,
            "cell" | "sector" => EntityKind::Cell,
            "bs" | "gnb" | "station" => EntityKind::Bs,
            "service" => EntityKind::Service,
            "slice" => EntityKind::Slice,
            "server" => EntityKind::Server,
            _ => return None,
        })
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: EntityKind,
    pub id: u32,
}

impl EntityRef {
    pub fn new(kind: EntityKind, id: u32) -> Self {
        Self { kind, id }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub category: String,
    pub entities: Vec<EntityRef>,
    pub confidence: f64,
}

impl Intent {
    pub fn general() -> Self {
        Self {
            category: GENERAL_QUERY.into(),
            entities: Vec::new(),
            confidence: 0.0,
        }
    }

    pub fn first(&self, kind: EntityKind) -> Option<u32> {
        self.entities.iter().find(|e| e.kind == kind).map(|e| e.id)
    }

    pub fn all(&self, kind: EntityKind) -> Vec<u32> {
        self.entities
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.id)
            .collect()
    }
}

pub(crate) const KIND_WORDS: &str = r"ue|cell|sector|bs|base station|gnb|service|slice|server";

static ENTITY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)\b(?:(that|this|the same)\s+)?({KIND_WORDS})\b(?:[\s#:-]*(\d+)\b)?"))
        .expect("valid entity regex")
});

static PHRASE_RES: LazyLock<Vec<Vec<(Regex, usize)>>> = LazyLock::new(|| {
    CATEGORIES
        .iter()
        .map(|(_, phrases)| {
            phrases
                .iter()
                .map(|p| {
                    let re = Regex::new(&format!(r"(?i)\b{}\b", regex::escape(p))).expect("phrase");
                    (re, p.split_whitespace().count())
                })
                .collect()
        })
        .collect()
});

/// Entities mentioned in `utterance`, in order of appearance. "that cell" and
/// friends bind to the most recent entity of that kind, looking first at
/// earlier mentions in the same utterance and then at `history` (oldest
/// first).
pub fn extract_entities(utterance: &str, history: &[EntityRef]) -> Vec<EntityRef> {
    let mut found: Vec<EntityRef> = Vec::new();
    for cap in ENTITY_RE.captures_iter(utterance) {
        let Some(kind) = EntityKind::from_word(&cap[2]) else {
            continue;
        };
        let entity = match (cap.get(3), cap.get(1)) {
            (Some(id), _) => id.as_str().parse().ok().map(|id| EntityRef::new(kind, id)),
            (None, Some(_)) => found
                .iter()
                .rev()
                .chain(history.iter().rev())
                .find(|e| e.kind == kind)
                .copied(),
            (None, None) => None,
        };
        if let Some(e) = entity {
            if !found.contains(&e) {
                found.push(e);
            }
        }
    }
    found
}

/// Rule-based classification. Empty or whitespace-only utterances are an
/// error; anything unrecognised falls back to [`GENERAL_QUERY`].
pub fn classify_intent(utterance: &str, history: &[EntityRef]) -> Result<Intent, AgentError> {
    if utterance.trim().is_empty() {
        return Err(AgentError::EmptyUtterance);
    }
    let mut best = (0usize, GENERAL_QUERY);
    for ((label, _), phrases) in CATEGORIES.iter().zip(PHRASE_RES.iter()) {
        let score: usize = phrases
            .iter()
            .filter(|(re, _)| re.is_match(utterance))
            .map(|(_, w)| w)
            .sum();
        if score > best.0 {
            best = (score, label);
        }
    }
    let confidence = if best.0 == 0 {
        0.0
    } else {
        (best.0 as f64 / 3.0).min(1.0)
    };
    Ok(Intent {
        category: best.1.to_string(),
        entities: extract_entities(utterance, history),
        confidence,
    })
}

/// Entities in order of first mention across several intents.
pub fn mention_history<'a>(intents: impl IntoIterator<Item = &'a Intent>) -> Vec<EntityRef> {
    let mut out = Vec::new();
    for i in intents {
        out.extend(i.entities.iter().copied());
    }
    out
}

/// Labels appearing more than once (should be none).
pub fn duplicate_labels() -> BTreeSet<&'static str> {
    let mut seen = BTreeSet::new();
    category_labels().filter(|l| !seen.insert(*l)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_distinct_labels() {
        assert_eq!(category_labels().count(), 50);
        assert!(duplicate_labels().is_empty());
        for named in [
            "ue_status_monitoring",
            "throughput_analysis",
            "congestion_analysis",
            "capacity_planning",
            "backhaul_analysis",
            "ai_services_management",
            "fault_prediction",
        ] {
            assert!(is_category(named), "{named}");
        }
    }

    #[test]
    fn sector_question_is_fault_diagnosis() {
        let i = classify_intent("Why is sector 3 dropping packets?", &[]).unwrap();
        assert_eq!(i.category, "fault_diagnosis");
        assert_eq!(i.entities, vec![EntityRef::new(EntityKind::Cell, 3)]);
    }

    #[test]
    fn empty_and_fallback() {
        assert_eq!(classify_intent("", &[]), Err(AgentError::EmptyUtterance));
        assert_eq!(classify_intent("   ", &[]), Err(AgentError::EmptyUtterance));
        let i = classify_intent("hello", &[]).unwrap();
        assert_eq!(i.category, GENERAL_QUERY);
        assert!(i.entities.is_empty());
    }

    #[test]
    fn coreference_binds_latest_of_kind() {
        let history = [
            EntityRef::new(EntityKind::Ue, 4),
            EntityRef::new(EntityKind::Cell, 2),
            EntityRef::new(EntityKind::Ue, 7),
        ];
        let got = extract_entities("what is the throughput of that UE on this cell?", &history);
        assert_eq!(
            got,
            vec![EntityRef::new(EntityKind::Ue, 7), EntityRef::new(EntityKind::Cell, 2)]
        );
        assert!(extract_entities("that slice", &history).is_empty());
    }

    #[test]
    fn entity_surface_forms() {
        let got = extract_entities("gNB 2, base station 3, UE-5, cell:4, edge server 1, AI service 6", &[]);
        let kinds: Vec<_> = got.iter().map(|e| (e.kind, e.id)).collect();
        assert_eq!(
            kinds,
            vec![
                (EntityKind::Bs, 2),
                (EntityKind::Bs, 3),
                (EntityKind::Ue, 5),
                (EntityKind::Cell, 4),
                (EntityKind::Server, 1),
                (EntityKind::Service, 6)
            ]
        );
    }

    #[test]
    fn ties_go_to_earlier_category() {
        // "throughput" and "backhaul" both score one word.
        let i = classify_intent("backhaul throughput", &[]).unwrap();
        assert_eq!(i.category, "throughput_analysis");
    }
}
