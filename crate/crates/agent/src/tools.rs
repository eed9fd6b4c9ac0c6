//! Tool registry and the testbed-backed tool host.

use std::fmt;

use airan_core::edge::{LatencyClass, Modality, UserRequirement};
use airan_core::knowledge::{KnowledgeQuery, Versioned};
use airan_core::ric::{Subscriber, SubscriptionAction, SubscriptionRequest};
use airan_core::testbed::SharedTestbed;
use airan_core::{CellId, ServiceId, UeId};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub type Params = Map<String, Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolFamily {
    KnowledgeGet,
    KnowledgeList,
    SimControl,
    DeployPipeline,
}

impl ToolFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolFamily::KnowledgeGet => "knowledge_get",
            ToolFamily::KnowledgeList => "knowledge_list",
            ToolFamily::SimControl => "sim_control",
            ToolFamily::DeployPipeline => "deploy_pipeline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            ToolFamily::KnowledgeGet,
            ToolFamily::KnowledgeList,
            ToolFamily::SimControl,
            ToolFamily::DeployPipeline,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
    }
}

impl fmt::Display for ToolFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToolSpec {
    pub name: &'static str,
    pub family: ToolFamily,
    pub description: &'static str,
    pub params_schema: Value,
}

/// The tool registry. Knowledge tools take a `path` plus query parameters.
pub fn registry() -> Vec<ToolSpec> {
    let obj = |props: Value, required: &[&str]| {
        json!({"type": "object", "properties": props, "required": required})
    };
    let path_schema = || {
        obj(
            json!({"path": {"type": "string"}, "window": {"type": "integer"}, "cell": {"type": "integer"}, "slice": {"type": "integer"}}),
            &["path"],
        )
    };
    vec![
        ToolSpec {
            name: "knowledge_get",
            family: ToolFamily::KnowledgeGet,
            description: "Read one entity, e.g. cell/3/kpi or ue/7/status.",
            params_schema: path_schema(),
        },
        ToolSpec {
            name: "knowledge_list",
            family: ToolFamily::KnowledgeList,
            description: "Bulk read over a collection path ending in _all, e.g. ue/_all.",
            params_schema: path_schema(),
        },
        ToolSpec {
            name: "sim_advance",
            family: ToolFamily::SimControl,
            description: "Advance the simulator by a number of ticks.",
            params_schema: obj(json!({"ticks": {"type": "integer"}}), &["ticks"]),
        },
        ToolSpec {
            name: "handover_command",
            family: ToolFamily::SimControl,
            description: "Queue a handover of a UE to a target cell.",
            params_schema: obj(
                json!({"ue": {"type": "integer"}, "target_cell": {"type": "integer"}}),
                &["ue", "target_cell"],
            ),
        },
        ToolSpec {
            name: "set_prb_quota",
            family: ToolFamily::SimControl,
            description: "Limit the PRBs a cell may allocate.",
            params_schema: obj(
                json!({"cell": {"type": "integer"}, "prbs": {"type": "integer"}}),
                &["cell", "prbs"],
            ),
        },
        ToolSpec {
            name: "profile_services",
            family: ToolFamily::DeployPipeline,
            description: "Rank catalog services that satisfy a requirement.",
            params_schema: obj(
                json!({
                    "modality": {"enum": ["vision", "nlp", "predictive"]},
                    "max_latency_class": {"enum": ["realtime", "interactive", "batch"]},
                    "min_accuracy_tier": {"type": "integer"}
                }),
                &["modality"],
            ),
        },
        ToolSpec {
            name: "subscribe_service",
            family: ToolFamily::DeployPipeline,
            description: "Subscribe to an AI service, deploying it on first use.",
            params_schema: obj(json!({"service": {"type": "integer"}, "ue": {"type": "integer"}}), &["service"]),
        },
        ToolSpec {
            name: "unsubscribe_service",
            family: ToolFamily::DeployPipeline,
            description: "Drop a subscription, tearing the service down after the last one.",
            params_schema: obj(json!({"service": {"type": "integer"}, "ue": {"type": "integer"}}), &["service"]),
        },
    ]
}

pub fn tool_family(tool: &str) -> Option<ToolFamily> {
    registry().into_iter().find(|t| t.name == tool).map(|t| t.family)
}

/// Plan-step label for a tool invocation: `family:label`. Knowledge paths
/// drop numeric segments and leading underscores, so `cell/3/kpi` becomes
/// `knowledge_get:cell_kpi` and `ue/_all` becomes `knowledge_list:ue_all`.
pub fn step_label(tool: &str, params: &Params) -> String {
    let family = tool_family(tool).map_or("unknown", ToolFamily::as_str);
    match (tool, params.get("path").and_then(Value::as_str)) {
        ("knowledge_get" | "knowledge_list", Some(path)) => format!("{family}:{}", path_label(path)),
        _ => format!("{family}:{tool}"),
    }
}

pub fn path_label(path: &str) -> String {
    path.split('/')
        .filter(|s| !s.is_empty() && !s.chars().all(|c| c.is_ascii_digit()))
        .map(|s| s.trim_start_matches('_'))
        .collect::<Vec<_>>()
        .join("_")
}

/// Family prefix of a plan-step label.
pub fn label_family(label: &str) -> Option<ToolFamily> {
    ToolFamily::parse(label.split_once(':')?.0)
}

/// Recorded outcome of one tool call, serialized as `{"ok": ..}` or
/// `{"error": ..}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolResult {
    Ok(Value),
    Error(String),
}

impl ToolResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, ToolResult::Ok(_))
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            ToolResult::Ok(v) => Some(v),
            ToolResult::Error(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToolOutcome {
    pub result: ToolResult,
    pub state_version: u64,
    /// For knowledge reads: whether the served payload equals an uncached
    /// route at the same version.
    pub verified: Option<bool>,
}

/// Executes tool requests on behalf of one session.
pub trait ToolHost: Send + Sync {
    fn invoke(&self, session_id: &str, tool: &str, params: &Params) -> ToolOutcome;
}

/// Tool host over a shared testbed.
#[derive(Clone, Debug)]
pub struct TestbedTools {
    shared: SharedTestbed,
    verify: bool,
    max_advance: u64,
}

impl TestbedTools {
    pub fn new(shared: SharedTestbed) -> Self {
        Self {
            shared,
            verify: false,
            max_advance: 1000,
        }
    }

    /// Cross-check every knowledge read against an uncached route.
    pub fn with_verification(mut self, on: bool) -> Self {
        self.verify = on;
        self
    }

    pub fn shared(&self) -> &SharedTestbed {
        &self.shared
    }

    fn knowledge(&self, tool: &str, params: &Params) -> ToolOutcome {
        let tb = self.shared.read();
        let version = tb.state_version();
        let fail = |msg: String| ToolOutcome {
            result: ToolResult::Error(msg),
            state_version: version,
            verified: None,
        };
        let query = match knowledge_query(tool, params) {
            Ok(q) => q,
            Err(e) => return fail(e),
        };
        let router = self.shared.router();
        match router.query_cached(&tb, &query) {
            Ok(res) => {
                let verified = self
                    .verify
                    .then(|| router.route(&tb, &query).is_ok_and(|fresh| fresh.payload == res.payload));
                ToolOutcome {
                    result: ToolResult::Ok(res.payload),
                    state_version: res.state_version,
                    verified,
                }
            }
            Err(e) => fail(e.to_string()),
        }
    }

    fn control(&self, session_id: &str, tool: &str, params: &Params) -> Result<Value, String> {
        match tool {
            "sim_advance" => {
                let ticks = param_u64(params, "ticks")?;
                if ticks == 0 || ticks > self.max_advance {
                    return Err(format!("ticks must be within 1..={}", self.max_advance));
                }
                let mut tb = self.shared.write();
                tb.run(ticks);
                Ok(json!({"ticks": ticks, "tick": tb.world().tick(), "state_version": tb.state_version()}))
            }
            "handover_command" => {
                let ue = UeId(param_u32(params, "ue")?);
                let target = CellId(param_u32(params, "target_cell")?);
                let mut tb = self.shared.write();
                tb.command_handover(ue, target).map_err(|e| e.to_string())?;
                Ok(json!({"ue": ue, "target_cell": target, "queued": true}))
            }
            "set_prb_quota" => {
                let cell = CellId(param_u32(params, "cell")?);
                let prbs = param_u32(params, "prbs")?;
                let mut tb = self.shared.write();
                tb.set_prb_quota(cell, prbs).map_err(|e| e.to_string())?;
                Ok(json!({"cell": cell, "prbs": prbs, "queued": true}))
            }
            "profile_services" => {
                let req = UserRequirement {
                    description: String::new(),
                    modality: param_enum::<Modality>(params, "modality")?,
                    max_latency_class: match params.get("max_latency_class") {
                        Some(_) => param_enum::<LatencyClass>(params, "max_latency_class")?,
                        None => LatencyClass::Batch,
                    },
                    min_accuracy_tier: match params.get("min_accuracy_tier") {
                        Some(_) => u8::try_from(param_u32(params, "min_accuracy_tier")?)
                            .map_err(|_| "min_accuracy_tier out of range".to_string())?,
                        None => 1,
                    },
                };
                let ranked = self.shared.read().profile(&req).map_err(|e| e.to_string())?;
                let recs: Vec<Value> = ranked
                    .iter()
                    .map(|s| {
                        json!({
                            "service": s.id,
                            "name": s.name,
                            "modality": s.modality,
                            "latency_class": s.latency_class,
                            "accuracy_tier": s.accuracy_tier,
                        })
                    })
                    .collect();
                Ok(json!({
                    "count": recs.len(),
                    "recommended_service": ranked.first().map(|s| s.id),
                    "recommendations": recs,
                }))
            }
            "subscribe_service" | "unsubscribe_service" => {
                let service = ServiceId(param_u32(params, "service")?);
                let subscriber = match params.get("ue") {
                    Some(_) => Subscriber::Ue(UeId(param_u32(params, "ue")?)),
                    None => Subscriber::Session(session_id.to_string()),
                };
                let action = if tool == "subscribe_service" {
                    SubscriptionAction::Subscribe
                } else {
                    SubscriptionAction::Unsubscribe
                };
                let mut tb = self.shared.write();
                let out = tb
                    .manage_subscription(&SubscriptionRequest {
                        service_id: service,
                        subscriber,
                        action,
                    })
                    .map_err(|e| e.to_string())?;
                let d = out.deployed.as_ref().or(out.torn_down.as_ref());
                Ok(json!({
                    "service": service,
                    "subscription": out.subscription.id,
                    "status": out.subscription.status,
                    "deployment": out.subscription.deployment,
                    "server": d.map(|d| d.server_id),
                    "deployment_state": d.map(|d| d.state),
                    "subscribers": tb.ric().active_subscriptions(service),
                }))
            }
            other => Err(format!("unknown tool {other}")),
        }
    }
}

impl ToolHost for TestbedTools {
    fn invoke(&self, session_id: &str, tool: &str, params: &Params) -> ToolOutcome {
        if matches!(tool, "knowledge_get" | "knowledge_list") {
            return self.knowledge(tool, params);
        }
        let result = self.control(session_id, tool, params);
        ToolOutcome {
            result: match result {
                Ok(v) => ToolResult::Ok(v),
                Err(e) => ToolResult::Error(e),
            },
            state_version: self.shared.state_version(),
            verified: None,
        }
    }
}

/// Builds the router query for a knowledge tool call. `knowledge_list` only
/// accepts collection paths (ending in `_all`) and `knowledge_get` rejects them.
pub fn knowledge_query(tool: &str, params: &Params) -> Result<KnowledgeQuery, String> {
    let path = params
        .get("path")
        .and_then(Value::as_str)
        .ok_or("missing string parameter \"path\"")?;
    let bulk = path.rsplit('/').next().is_some_and(|s| s == "_all");
    match (tool, bulk) {
        ("knowledge_list", false) => return Err(format!("{path} is not a collection path")),
        ("knowledge_get", true) => return Err(format!("{path} is a collection path; use knowledge_list")),
        _ => {}
    }
    let mut q = KnowledgeQuery::new(path);
    for (k, v) in params.iter().filter(|(k, _)| k.as_str() != "path") {
        q = q.param(k.clone(), param_string(v));
    }
    Ok(q)
}

/// String form used for parameter comparison: strings verbatim, everything
/// else as compact JSON.
pub fn param_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn param_u64(params: &Params, key: &str) -> Result<u64, String> {
    match params.get(key) {
        Some(Value::Number(n)) => n.as_u64().ok_or_else(|| format!("{key} must be a non-negative integer")),
        Some(Value::String(s)) => s.parse().map_err(|_| format!("{key} must be a non-negative integer")),
        Some(_) => Err(format!("{key} must be a non-negative integer")),
        None => Err(format!("missing parameter {key:?}")),
    }
}

fn param_u32(params: &Params, key: &str) -> Result<u32, String> {
    u32::try_from(param_u64(params, key)?).map_err(|_| format!("{key} out of range"))
}

fn param_enum<T: serde::de::DeserializeOwned>(params: &Params, key: &str) -> Result<T, String> {
    let v = params.get(key).ok_or_else(|| format!("missing parameter {key:?}"))?;
    serde_json::from_value(v.clone()).map_err(|_| format!("invalid value {v} for {key}"))
}
