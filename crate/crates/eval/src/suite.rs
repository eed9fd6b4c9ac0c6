//! The built-in 50-scenario suite, one scenario per intent category.
//!
//! `suites/hatte-50.json` is generated from [`builtin_suite`]; a unit test
//! keeps the two in sync.

use std::collections::BTreeMap;

use airan_agent::tools::{step_label, Params};
use airan_agent::{EntityKind, Persona};
use serde_json::{json, Value};

use crate::report::formulas;
use crate::scenario::{
    Difficulty, GroundTruth, ReferenceCall, Scenario, ScenarioTurn, SimRef, SuiteFile, SuiteHeader,
    DEFAULT_TOLERANCE, HATTE_VERSION,
};

pub const SUITE_JSON: &str = include_str!("../suites/hatte-50.json");
pub const WARMUP_TICKS: u64 = 20;

enum Gt {
    Num(&'static str, &'static str),
    Ent(&'static str, &'static str, EntityKind),
    Txt(&'static str, &'static str),
    Rub(&'static str),
}

struct T {
    u: &'static str,
    calls: &'static [&'static str],
    alt: &'static [&'static [&'static str]],
    gt: Gt,
}

const fn t(u: &'static str, calls: &'static [&'static str], gt: Gt) -> T {
    T { u, calls, alt: &[], gt }
}

const fn ta(u: &'static str, calls: &'static [&'static str], alt: &'static [&'static [&'static str]], gt: Gt) -> T {
    T { u, calls, alt, gt }
}

struct S {
    cat: &'static str,
    diff: Difficulty,
    persona: Persona,
    preset: &'static str,
    turns: Vec<T>,
}

fn s(cat: &'static str, diff: Difficulty, turns: Vec<T>) -> S {
    S {
        cat,
        diff,
        persona: Persona::Engineer,
        preset: "desk-3cell",
        turns,
    }
}

fn scalar(v: &str) -> Value {
    v.parse::<u64>().map_or_else(|_| json!(v), |n| json!(n))
}

/// `get p?k=v`, `list p?k=v` or `tool k=v ...`.
pub fn parse_call(dsl: &str) -> ReferenceCall {
    let (verb, rest) = dsl.split_once(' ').unwrap_or((dsl, ""));
    let mut params = Params::new();
    let tool = match verb {
        "get" | "list" => {
            let (path, query) = rest.split_once('?').unwrap_or((rest, ""));
            params.insert("path".into(), json!(path));
            for (k, v) in query.split('&').filter_map(|p| p.split_once('=')) {
                params.insert(k.into(), scalar(v));
            }
            if verb == "get" { "knowledge_get" } else { "knowledge_list" }
        }
        tool => {
            for (k, v) in rest.split_whitespace().filter_map(|p| p.split_once('=')) {
                params.insert(k.into(), scalar(v));
            }
            tool
        }
    };
    ReferenceCall {
        tool: tool.to_string(),
        required_params: params,
    }
}

fn labels(calls: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in calls {
        let rc = parse_call(c);
        let l = step_label(&rc.tool, &rc.required_params);
        if !out.contains(&l) {
            out.push(l);
        }
    }
    out
}

fn ground_truth(gt: &Gt) -> GroundTruth {
    let det = |path: &str, pointer: &str, entity_kind| {
        let (path, query) = path.split_once('?').unwrap_or((path, ""));
        let params: Params = query
            .split('&')
            .filter_map(|p| p.split_once('='))
            .map(|(k, v)| (k.to_string(), scalar(v)))
            .collect();
        GroundTruth::Deterministic {
            path: path.to_string(),
            params,
            pointer: pointer.to_string(),
            entity_kind,
            expected_value: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    };
    match gt {
        Gt::Num(p, ptr) | Gt::Txt(p, ptr) => det(p, ptr, None),
        Gt::Ent(p, ptr, k) => det(p, ptr, Some(*k)),
        Gt::Rub(text) => GroundTruth::Rubric {
            reference_answer_text: (*text).to_string(),
        },
    }
}

use Difficulty::{Easy, Hard, Medium};
use EntityKind::{Cell, Server, Service};
use Gt::{Ent, Num, Rub, Txt};

fn specs() -> Vec<S> {
    let mut v = vec![
        // easy
        s("ue_status_monitoring", Easy, vec![
            t("What is the status of UE 5?", &["get ue/5/status"], Ent("ue/5/status", "/serving_cell", Cell)),
            t("Check UE 12 as well.", &["get ue/12/status"], Num("ue/12/status", "/sinr_db")),
        ]),
        s("cell_load_monitoring", Easy, vec![
            ta("How loaded is cell 2?", &["get cell/2/load"], &[&["get cell/2/load", "get cell/2/kpi"]], Num("cell/2/load", "/load")),
            t("And the load on cell 3?", &["get cell/3/load"], Num("cell/3/load", "/allocated_prbs")),
        ]),
        s("backhaul_analysis", Easy, vec![
            t("Check backhaul utilization for BS 1.", &["get bs/1/summary"], Num("bs/1/summary", "/backhaul_utilization")),
            t("What about the transport link of BS 3?", &["get bs/3/summary"], Num("bs/3/summary", "/backhaul_mbps")),
        ]),
        s("ric_xapp_status", Easy, vec![
            t("List the xApps running on the RIC.", &["get ric/xapps"], Num("ric/xapps", "/count")),
            t("How many control actions has the RIC applied?", &["get ric/xapps"], Num("ric/xapps", "/applied_actions")),
        ]),
        s("ric_subscription_audit", Easy, vec![
            t("Show the subscription list.", &["get ric/subscriptions"], Num("ric/subscriptions", "/count")),
            t("How many subscriptions are active right now?", &["get ric/subscriptions"], Num("ric/subscriptions", "/active")),
        ]),
        s("edge_server_utilization", Easy, vec![
            t("What is the edge server utilization on server 1?", &["get edge_server/1/utilization"], Num("edge_server/1/utilization", "/cpu_utilization")),
            t("And the GPU usage of server 2?", &["get edge_server/2/utilization"], Num("edge_server/2/utilization", "/gpu_utilization")),
        ]),
        s("slice_management", Easy, vec![
            t("Who are the members of slice 1?", &["get slice/1/members"], Num("slice/1/members", "/count")),
            t("List the slice members of slice 2.", &["get slice/2/members"], Num("slice/2/members", "/throughput_mbps")),
        ]),
        s("base_station_summary", Easy, vec![
            t("Give me a site summary for base station 2.", &["get bs/2/summary"], Num("bs/2/summary", "/ue_count")),
            t("And the gNB 3 summary?", &["get bs/3/summary"], Num("bs/3/summary", "/mean_load")),
        ]),
        s("topology_query", Easy, vec![
            t("Describe the network topology.", &["list bs/_all"], Num("bs/_all", "/count")),
            t("Which cells belong to each site?", &["list bs/_all"], Num("bs/_all", "/base_stations/1/ue_count")),
        ]),
        s("service_health_check", Easy, vec![
            t("What is the service status of service 3?", &["get ai_service/3/status"], Txt("ai_service/3/status", "/name")),
            t("Check the health of service 5.", &["get ai_service/5/status"], Num("ai_service/5/status", "/subscribers")),
        ]),
        s("kpi_reporting", Easy, vec![
            ta("Report the KPIs for cell 1.", &["get cell/1/kpi"], &[&["get cell/1/kpi", "get cell/1/history?window=10"]], Num("cell/1/kpi", "/throughput_mbps")),
            t("Give me the key performance numbers of cell 2.", &["get cell/2/kpi"], Num("cell/2/kpi", "/mean_sinr_db")),
        ]),
        s("network_overview", Easy, vec![
            t("Give me an overview of the whole network.", &["list cell/_all"], Ent("cell/_all", "/most_loaded_cell", Cell)),
            t("What is the overall network mean load?", &["list cell/_all"], Num("cell/_all", "/mean_load")),
        ]),
        s("signal_quality_analysis", Easy, vec![
            t("What is the SINR of UE 7?", &["get ue/7/status"], Num("ue/7/status", "/sinr_db")),
            t("And the signal strength for UE 9?", &["get ue/9/status"], Num("ue/9/status", "/rsrp_dbm")),
        ]),
        s("capacity_planning", Easy, vec![
            t("How much capacity headroom do the cells have?", &["list cell/_all"], Num("cell/_all", "/min_load")),
            t("Plan capacity around the least loaded cell.", &["list cell/_all"], Ent("cell/_all", "/least_loaded_cell", Cell)),
        ]),
        s("slice_performance", Easy, vec![
            t("Show slice performance.", &["list slice/_all"], Num("slice/_all", "/slices/0/throughput_mbps")),
            t("What is the per slice throughput?", &["list slice/_all"], Num("slice/_all", "/slices/1/count")),
        ]),
        // medium
        s("throughput_analysis", Medium, vec![
            t("What throughput is UE 3 getting?", &["get ue/3/status"], Num("ue/3/status", "/throughput_mbps")),
            t("Compare that with the throughput of cell 2.", &["get cell/2/kpi"], Num("cell/2/kpi", "/throughput_mbps")),
        ]),
        s("congestion_analysis", Medium, vec![
            t("Which cell is the most congested?", &["list cell/_all"], Ent("cell/_all", "/most_loaded_cell", Cell)),
            t("Show the unserved demand on cell 1.", &["get cell/1/kpi"], Num("cell/1/kpi", "/unserved_prbs")),
        ]),
        s("ai_services_management", Medium, vec![
            t("Which AI services are deployed?", &["list ai_service/_all"], Num("ai_service/_all", "/running_deployments")),
            t("How many subscribers does service 2 have?", &["get ai_service/2/status"], Num("ai_service/2/status", "/subscribers")),
        ]),
        s("handover_analysis", Medium, vec![
            t("How many handovers has UE 8 made?", &["get ue/8/status"], Num("ue/8/status", "/handovers")),
            ta("Which cells see the most incoming moves?", &["list cell/_all", "get cell/3/kpi"], &[&["get cell/3/kpi", "get cell/3/history?window=10"]], Num("cell/3/kpi", "/handovers_in")),
        ]),
        s("interference_analysis", Medium, vec![
            t("Is there interference on cell 3?", &["get cell/3/kpi"], Num("cell/3/kpi", "/min_sinr_db")),
            t("How many UEs on cell 3 suffer from the low SINR?", &["list ue/_all?cell=3"], Num("ue/_all?cell=3", "/count")),
        ]),
        s("mobility_tracking", Medium, vec![
            t("Track UE 4 over the last 5 ticks.", &["get ue/4/history?window=5"], Num("ue/4/history?window=5", "/count")),
            ta("Where has UE 10 been moving?", &["get ue/10/history?window=10", "get ue/10/status"], &[&["get ue/10/status", "list cell/_all"]], Ent("ue/10/status", "/serving_cell", Cell)),
        ]),
        s("prb_allocation", Medium, vec![
            t("Show the PRB allocation for cell 1.", &["get cell/1/load"], Num("cell/1/load", "/allocated_prbs")),
            t("Compare resource blocks allocated against demand on cell 2.", &["get cell/2/load", "get cell/2/kpi"], Num("cell/2/kpi", "/demand_prbs")),
        ]),
        s("qos_verification", Medium, vec![
            t("Is cell 2 meeting demand?", &["get cell/2/kpi"], Num("cell/2/kpi", "/unserved_prbs")),
            t("Check the QoS of slice 2.", &["get slice/2/members"], Num("slice/2/members", "/throughput_mbps")),
        ]),
        s("service_recommendation", Medium, vec![
            t("Recommend a vision model for real-time use.", &["profile_services modality=vision max_latency_class=realtime"], Ent("", "", Service)),
            t("Suggest a language model that is interactive or faster with accuracy tier 4.", &["profile_services modality=nlp max_latency_class=interactive min_accuracy_tier=4"], Rub("The speech transcriber is the only language service that meets both the latency and the accuracy requirement.")),
        ]),
        s("coverage_analysis", Medium, vec![
            t("Are there coverage holes anywhere?", &["list ue/_all"], Num("ue/_all", "/count")),
            t("Which UEs on cell 1 are at the edge of coverage?", &["list ue/_all?cell=1"], Num("ue/_all?cell=1", "/total_throughput_mbps")),
        ]),
        s("traffic_demand_analysis", Medium, vec![
            t("How much traffic is cell 3 carrying?", &["get cell/3/kpi"], Num("cell/3/kpi", "/demand_prbs")),
            t("What is the traffic demand of UE 2?", &["get ue/2/status"], Num("ue/2/status", "/traffic_demand")),
        ]),
        s("trend_analysis", Medium, vec![
            t("Show the load trend of cell 2.", &["get cell/2/history?window=10"], Num("cell/2/history?window=10", "/count")),
            t("How has the throughput of UE 6 changed over time?", &["get ue/6/history?window=10"], Num("ue/6/history?window=10", "/window")),
        ]),
        s("cell_comparison", Medium, vec![
            t("Compare cell 1 versus cell 2.", &["get cell/1/kpi", "get cell/2/kpi"], Num("cell/2/kpi", "/load")),
            t("Which one has more UEs attached?", &["list cell/_all"], Num("cell/_all", "/cells/0/ue_count")),
        ]),
        s("ue_distribution", Medium, vec![
            t("How many UEs are attached per cell?", &["list cell/_all"], Num("cell/_all", "/cells/1/ue_count")),
            t("What is the UE count on cell 3?", &["get cell/3/load"], Num("cell/3/load", "/ue_count")),
        ]),
        s("neighbor_cell_analysis", Medium, vec![
            t("What is the best neighbor cell for UE 11?", &["get ue/11/status"], Num("ue/11/status", "/rsrp_dbm")),
            t("How loaded are the neighbour cells?", &["list cell/_all"], Num("cell/_all", "/mean_load")),
        ]),
        s("sla_compliance", Medium, vec![
            t("Are the slices meeting their SLA?", &["list slice/_all"], Num("slice/_all", "/slices/0/throughput_mbps")),
            ta("Is the URLLC slice 2 compliant with its guarantee?", &["get slice/2/members", "list ue/_all?slice=2"], &[&["list slice/_all", "list ue/_all"]], Num("ue/_all?slice=2", "/total_throughput_mbps")),
        ]),
        s("edge_placement_analysis", Medium, vec![
            t("Where is service 1 placed?", &["get ai_service/1/status"], Num("ai_service/1/status", "/instances")),
            t("Which server has the most headroom?", &["list edge_server/_all"], Num("edge_server/_all", "/servers/0/max_utilization")),
        ]),
        s("general_query", Medium, vec![
            t("Hello, what can you do?", &[], Rub("I can report on UEs, cells, base stations, slices, RIC xApps, edge servers and AI services.")),
            t("Thanks, and how is cell 1 doing?", &["get cell/1/load"], Num("cell/1/load", "/load")),
        ]),
        // hard
        s("fault_prediction", Hard, vec![
            t("Is cell 1 likely to fail soon?", &["get cell/1/history?window=10", "get cell/1/kpi"], Num("cell/1/kpi", "/load")),
            t("Advance 20 ticks and check it again.", &["sim_advance ticks=20", "get cell/1/kpi"], Num("cell/1/kpi", "/unserved_prbs")),
            t("Summarize the risk for that cell.", &["get cell/1/history?window=20"], Rub("The cell shows rising load and some unserved demand, so it is at risk of congestion.")),
        ]),
        s("fault_diagnosis", Hard, vec![
            t("Why is sector 2 dropping packets?", &["get cell/2/kpi", "get cell/2/load", "list ue/_all?cell=2"], Num("cell/2/kpi", "/unserved_prbs")),
            t("How many UEs on that cell have weak signal?", &["list ue/_all?cell=2"], Num("ue/_all?cell=2", "/count")),
            t("Hand UE 3 over to cell 1.", &["handover_command ue=3 target_cell=1"], Rub("A handover was queued and will apply on the next tick.")),
        ]),
        s("load_balancing", Hard, vec![
            t("Balance the load across cells.", &["list cell/_all", "get ric/xapps"], Ent("cell/_all", "/most_loaded_cell", Cell)),
            t("Cap cell 1 at 40 PRBs.", &["set_prb_quota cell=1 prbs=40"], Rub("The quota change is queued and takes effect on the next tick.")),
            t("Advance 10 ticks and show cell 1 load.", &["sim_advance ticks=10", "get cell/1/load"], Num("cell/1/load", "/prb_quota")),
        ]),
        S {
            cat: "ai_service_deployment",
            diff: Hard,
            persona: Persona::User,
            preset: "desk-3cell",
            turns: vec![
                t("I need real-time object detection with accuracy tier 4.", &["profile_services modality=vision max_latency_class=realtime min_accuracy_tier=4", "subscribe_service service=1", "get ai_service/1/status"], Num("ai_service/1/status", "/subscribers")),
                t("Is the deployment progressing?", &["get ai_service/1/status"], Num("ai_service/1/status", "/instances")),
                t("What state is that rollout in now?", &["get ai_service/1/status"], Txt("ai_service/1/status", "/deployments/0/state")),
            ],
        },
        S {
            cat: "ai_service_teardown",
            diff: Hard,
            persona: Persona::User,
            preset: "desk-3cell",
            turns: vec![
                t("Subscribe me to the speech transcriber, service 4.", &["subscribe_service service=4", "get ai_service/4/status"], Num("ai_service/4/status", "/subscribers")),
                t("I no longer need it, please unsubscribe.", &["unsubscribe_service service=4", "get ai_service/4/status"], Num("ai_service/4/status", "/subscribers")),
                t("Confirm nobody is subscribed any more.", &["get ric/subscriptions"], Num("ric/subscriptions", "/active")),
            ],
        },
        s("anomaly_detection", Hard, vec![
            t("Are there any anomalies in the network?", &["list cell/_all"], Num("cell/_all", "/max_load")),
            t("Look at the unusual cell 3 in detail.", &["get cell/3/kpi", "get cell/3/history?window=10"], Num("cell/3/kpi", "/min_sinr_db")),
            t("Is any xApp raising errors?", &["get ric/xapps"], Num("ric/xapps", "/xapps/0/errors")),
        ]),
        s("handover_control", Hard, vec![
            t("Show the status of UE 6.", &["get ue/6/status"], Ent("ue/6/status", "/serving_cell", Cell)),
            t("Force handover of that UE to cell 2.", &["handover_command ue=6 target_cell=2"], Rub("The handover is queued for the next tick.")),
            t("Advance 1 tick and confirm its serving cell.", &["sim_advance ticks=1", "get ue/6/status"], Ent("ue/6/status", "/serving_cell", Cell)),
        ]),
        s("resource_quota_tuning", Hard, vec![
            t("Set PRB quota of cell 3 to 30 PRBs.", &["set_prb_quota cell=3 prbs=30"], Rub("The new quota is queued for the next tick.")),
            t("Run the simulation 5 ticks forward and show the cell load.", &["sim_advance ticks=5", "get cell/3/load"], Num("cell/3/load", "/prb_quota")),
            t("Is cell 3 still meeting demand?", &["get cell/3/kpi"], Num("cell/3/kpi", "/unserved_prbs")),
        ]),
        s("simulation_control", Hard, vec![
            t("Advance the simulation 15 ticks.", &["sim_advance ticks=15"], Rub("The simulator advanced and the state version moved forward.")),
            ta("Now what is the load on cell 2 and its history?", &["get cell/2/load", "get cell/2/history?window=15"], &[&["get cell/2/kpi", "get cell/2/history?window=15"]], Num("cell/2/load", "/load")),
        ]),
        s("performance_optimization", Hard, vec![
            t("Optimize performance on the busiest cell.", &["list cell/_all", "get ric/xapps"], Ent("cell/_all", "/most_loaded_cell", Cell)),
            t("Which xApps are acting on it?", &["get ric/xapps"], Num("ric/xapps", "/count")),
        ]),
        S {
            cat: "configuration_audit",
            diff: Hard,
            persona: Persona::Engineer,
            preset: "desk-7cell",
            turns: vec![
                t("Audit the RIC and edge configuration.", &["get ric/xapps", "list edge_server/_all"], Num("edge_server/_all", "/count")),
                t("Audit the slice configuration too.", &["list slice/_all", "list bs/_all"], Num("slice/_all", "/count")),
            ],
        },
        s("deployment_status_tracking", Hard, vec![
            t("Deploy the anomaly detector, service 8.", &["subscribe_service service=8", "get ai_service/8/status"], Num("ai_service/8/status", "/subscribers")),
            t("Advance 5 ticks and check the rollout.", &["sim_advance ticks=5", "get ai_service/8/status"], Txt("ai_service/8/status", "/deployments/0/state")),
            t("Which server hosts it?", &["get ai_service/8/status"], Ent("ai_service/8/status", "/deployments/0/server", Server)),
        ]),
        s("root_cause_analysis", Hard, vec![
            t("What is the root cause of low throughput on cell 1?", &["get cell/1/kpi", "list ue/_all?cell=1"], Num("cell/1/kpi", "/mean_sinr_db")),
            t("Compare with the backhaul of its base station.", &["get bs/1/summary"], Num("bs/1/summary", "/backhaul_utilization")),
            t("Explain the drop in one sentence.", &[], Rub("Throughput on the cell is limited by radio conditions and load rather than by the backhaul link.")),
        ]),
        s("what_if_analysis", Hard, vec![
            t("What happens if cell 2 gets only 20 PRBs?", &["get cell/2/load"], Num("cell/2/load", "/allocated_prbs")),
            t("Apply a quota of 20 PRBs on cell 2 and advance 10 ticks.", &["set_prb_quota cell=2 prbs=20", "sim_advance ticks=10", "get cell/2/kpi"], Num("cell/2/kpi", "/unserved_prbs")),
            t("How did the network overview change?", &["list cell/_all"], Num("cell/_all", "/mean_load")),
        ]),
        s("alarm_triage", Hard, vec![
            t("Triage the current alarms.", &["get ric/xapps", "list cell/_all"], Num("ric/xapps", "/queued_actions")),
            t("Which cell has the lowest SINR floor?", &["get cell/1/kpi", "get cell/2/kpi", "get cell/3/kpi"], Num("cell/3/kpi", "/min_sinr_db")),
            t("Write a short triage note.", &[], Rub("No xApp reports errors and the most loaded cell needs attention first.")),
        ]),
    ];
    v.insert(29, S {
        cat: "latency_requirement_matching",
        diff: Medium,
        persona: Persona::User,
        preset: "desk-3cell",
        turns: vec![
            t("Which service meets a real-time latency budget for speech?", &["profile_services modality=nlp max_latency_class=realtime"], Ent("", "", Service)),
            t("What about an interactive budget for forecasting?", &["profile_services modality=predictive max_latency_class=interactive"], Num("", "/count")),
        ],
    });
    v.insert(32, S {
        cat: "user_experience_analysis",
        diff: Medium,
        persona: Persona::User,
        preset: "desk-3cell",
        turns: vec![
            t("My connection feels slow, I am UE 14.", &["get ue/14/status"], Num("ue/14/status", "/throughput_mbps")),
            t("Would my experience be better on a quieter cell?", &["get ue/14/status", "list cell/_all"], Ent("cell/_all", "/least_loaded_cell", Cell)),
        ],
    });
    v
}

fn build(i: usize, spec: S) -> Scenario {
    let id = format!("hatte-{:02}-{}", i + 1, spec.cat.replace('_', "-"));
    let turns = spec
        .turns
        .into_iter()
        .map(|tt| {
            let calls: Vec<ReferenceCall> = tt.calls.iter().map(|c| parse_call(c)).collect();
            let mut plans = vec![labels(tt.calls)];
            plans.extend(tt.alt.iter().map(|a| labels(a)));
            let ground_truth = match (&tt.gt, calls.first()) {
                // Profile answers come from the tool result itself.
                (Gt::Ent("", "", _) | Gt::Num("", _), Some(c)) => recommended_truth(&tt.gt, c),
                _ => ground_truth(&tt.gt),
            };
            ScenarioTurn {
                utterance: tt.u.to_string(),
                reference_plans: plans,
                reference_tool_calls: calls,
                ground_truth,
            }
        })
        .collect();
    Scenario {
        id,
        category: spec.cat.to_string(),
        difficulty: spec.diff,
        persona: spec.persona,
        sim_config: SimRef {
            preset: spec.preset.to_string(),
            seed: 1000 + i as u64,
            warmup_ticks: WARMUP_TICKS,
        },
        turns,
    }
}

/// Profiling is stateless, so its answer is fixed: evaluate it once on the
/// catalog and pin the value.
fn recommended_truth(gt: &Gt, call: &ReferenceCall) -> GroundTruth {
    use airan_core::testbed::TestbedConfig;
    let cfg = TestbedConfig::preset("desk-3cell").expect("preset");
    let shared = airan_core::testbed::SharedTestbed::from_config(&cfg).expect("testbed");
    let tools = airan_agent::TestbedTools::new(shared);
    let out = airan_agent::ToolHost::invoke(&tools, "suite", &call.tool, &call.required_params);
    let payload = out.result.value().cloned().unwrap_or(Value::Null);
    let (pointer, entity_kind) = match gt {
        Gt::Ent(_, _, k) => ("/recommended_service", Some(*k)),
        Gt::Num(_, p) => (*p, None),
        _ => unreachable!("only profile truths are pinned"),
    };
    GroundTruth::Deterministic {
        path: "ai_service/_all".to_string(),
        params: Params::new(),
        pointer: pointer.to_string(),
        entity_kind,
        expected_value: payload.pointer(pointer).cloned(),
        tolerance: DEFAULT_TOLERANCE,
    }
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    specs().into_iter().enumerate().map(|(i, sp)| build(i, sp)).collect()
}

pub fn builtin_suite() -> SuiteFile {
    let scenarios = builtin_scenarios();
    let mut dist = BTreeMap::new();
    for sc in &scenarios {
        *dist.entry(sc.difficulty).or_insert(0) += 1;
    }
    SuiteFile {
        hatte_version: HATTE_VERSION.to_string(),
        header: SuiteHeader {
            difficulty_distribution: dist,
            formulas: formulas(),
        },
        scenarios,
    }
}

pub fn builtin_suite_json() -> String {
    serde_json::to_string_pretty(&builtin_suite()).expect("suite serializes") + "\n"
}

/// Scenarios taken in order, skipping any that would overshoot, until the
/// turn count reaches `turns`. Returns fewer turns only if the suite runs out.
pub fn turn_subset(scenarios: &[Scenario], turns: usize) -> Vec<Scenario> {
    let mut out = Vec::new();
    let mut n = 0;
    for sc in scenarios {
        if n + sc.turns.len() <= turns {
            n += sc.turns.len();
            out.push(sc.clone());
        }
        if n == turns {
            break;
        }
    }
    out
}
