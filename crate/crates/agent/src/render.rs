//! Template responses. Every number printed comes straight from a tool
//! payload, so rendered text grounds completely.

use serde_json::Value;

use crate::claims::fmt_value;
use crate::intent::Intent;
use crate::plan::Plan;
use crate::session::ToolCall;
use crate::tools::{path_label, ToolResult};

pub fn render_response(intent: &Intent, plan: &Plan, calls: &[ToolCall]) -> String {
    let mut parts = vec![lead(&intent.category)];
    if calls.is_empty() {
        if plan.notes.iter().any(|n| n.starts_with("delegation refused")) {
            parts.push("That action is reserved for network engineers, so nothing was changed.".into());
        } else if !plan.notes.is_empty() {
            parts.push("I need the specific entity id to act on that request.".into());
        } else {
            parts.push(
                "I can report on UEs, cells, base stations, slices, RIC xApps, edge servers and AI services."
                    .into(),
            );
        }
    }
    for call in calls {
        parts.push(match &call.result {
            ToolResult::Ok(v) => describe(call, v),
            ToolResult::Error(_) => format!("The {} request returned an error.", call_label(call)),
        });
    }
    parts.join(" ")
}

fn lead(category: &str) -> String {
    let mut s = category.replace('_', " ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    format!("{s}.")
}

fn call_label(call: &ToolCall) -> String {
    match call.params.get("path").and_then(Value::as_str) {
        Some(p) => path_label(p).replace('_', " "),
        None => call.tool.replace('_', " "),
    }
}

struct F<'a>(&'a Value);

impl F<'_> {
    fn s(&self, key: &str) -> String {
        self.0.get(key).map_or_else(|| "n/a".into(), fmt_value)
    }

    fn has(&self, key: &str) -> bool {
        self.0.get(key).is_some_and(|v| !v.is_null())
    }

    fn arr(&self, key: &str) -> &[Value] {
        self.0.get(key).and_then(Value::as_array).map_or(&[], Vec::as_slice)
    }
}

fn extreme<'a>(items: &'a [Value], key: &str, max: bool) -> Option<&'a Value> {
    items
        .iter()
        .filter(|v| v.get(key).and_then(Value::as_f64).is_some())
        .reduce(|a, b| {
            let (x, y) = (a[key].as_f64().unwrap_or(0.0), b[key].as_f64().unwrap_or(0.0));
            if (max && y > x) || (!max && y < x) {
                b
            } else {
                a
            }
        })
}

fn describe(call: &ToolCall, v: &Value) -> String {
    let f = F(v);
    let path = call.params.get("path").and_then(Value::as_str).unwrap_or("");
    let label = if path.is_empty() { call.tool.clone() } else { path_label(path) };
    match label.as_str() {
        "ue_status" => format!(
            "UE {} is served by cell {} with SINR {} dB, RSRP {} dBm, {} PRBs allocated against a demand of {} and throughput {} Mbps after {} handovers.",
            f.s("ue"), f.s("serving_cell"), f.s("sinr_db"), f.s("rsrp_dbm"), f.s("allocated_prbs"),
            f.s("traffic_demand"), f.s("throughput_mbps"), f.s("handovers")
        ),
        "ue_history" | "cell_history" => {
            let kind = if label == "ue_history" { "UE" } else { "Cell" };
            let id = f.s(if label == "ue_history" { "ue" } else { "cell" });
            let records = f.arr("records");
            let mut s = format!("{kind} {id} history holds {} samples over a window of {} ticks.", f.s("count"), f.s("window"));
            let key = if label == "ue_history" { "throughput_mbps" } else { "load" };
            if let (Some(first), Some(last)) = (records.first(), records.last()) {
                s.push_str(&format!(
                    " Its {} moved from {} to {}.",
                    key.replace('_', " "),
                    fmt_value(&first[key]),
                    fmt_value(&last[key])
                ));
            }
            s
        }
        "ue_all" => {
            let mut s = format!("{} UEs matched with total throughput {} Mbps.", f.s("count"), f.s("total_throughput_mbps"));
            if let Some(w) = extreme(f.arr("ues"), "sinr_db", false) {
                s.push_str(&format!(" The weakest link is UE {} on cell {} at {} dB SINR.", fmt_value(&w["ue"]), fmt_value(&w["serving_cell"]), fmt_value(&w["sinr_db"])));
            }
            s
        }
        "cell_load" => format!(
            "Cell {} load is {} with {} of {} PRBs allocated under a quota of {} across {} UEs.",
            f.s("cell"), f.s("load"), f.s("allocated_prbs"), f.s("prb_capacity"), f.s("prb_quota"), f.s("ue_count")
        ),
        "cell_kpi" => format!(
            "Cell {} on BS {} reports load {}, {} UEs, throughput {} Mbps, mean SINR {} dB with a minimum of {} dB, PRB demand {} with {} unserved, {} handovers in and {} out.",
            f.s("cell"), f.s("bs"), f.s("load"), f.s("ue_count"), f.s("throughput_mbps"), f.s("mean_sinr_db"),
            f.s("min_sinr_db"), f.s("demand_prbs"), f.s("unserved_prbs"), f.s("handovers_in"), f.s("handovers_out")
        ),
        "cell_all" => format!(
            "Across {} cells the mean load is {}; the most loaded is cell {} at {} and the least loaded is cell {} at {}.",
            f.s("count"), f.s("mean_load"), f.s("most_loaded_cell"), f.s("max_load"), f.s("least_loaded_cell"), f.s("min_load")
        ),
        "bs_summary" => bs_sentence(&f),
        "bs_all" => {
            let mut s = format!("{} base stations are configured.", f.s("count"));
            for b in f.arr("base_stations") {
                s.push(' ');
                s.push_str(&bs_sentence(&F(b)));
            }
            s
        }
        "ric_xapps" => {
            let mut s = format!(
                "{} xApps are registered with {} control actions queued and {} applied.",
                f.s("count"), f.s("queued_actions"), f.s("applied_actions")
            );
            for x in f.arr("xapps") {
                let x = F(x);
                s.push_str(&format!(" xApp {} is {} with {} errors.", x.s("id"), x.s("state"), x.s("errors")));
            }
            s
        }
        "ric_subscriptions" => format!("{} AI service subscriptions exist and {} are active.", f.s("count"), f.s("active")),
        "ai_service_status" => {
            let mut s = format!(
                "Service {} ({}) is {} with {} instances and {} subscribers at accuracy tier {}.",
                f.s("service"), f.s("name"), f.s("state"), f.s("instances"), f.s("subscribers"), f.s("accuracy_tier")
            );
            for d in f.arr("deployments") {
                let d = F(d);
                s.push_str(&format!(" Deployment {} is {} on server {}.", d.s("deployment"), d.s("state"), d.s("server")));
            }
            s
        }
        "ai_service_all" => {
            let mut s = format!("{} catalog services with {} running deployments.", f.s("count"), f.s("running_deployments"));
            for svc in f.arr("services").iter().filter(|x| x["state"] != "NotDeployed") {
                let svc = F(svc);
                s.push_str(&format!(" Service {} ({}) is {} for {} subscribers.", svc.s("service"), svc.s("name"), svc.s("state"), svc.s("subscribers")));
            }
            s
        }
        "edge_server_utilization" => server_sentence(&f),
        "edge_server_all" => {
            let servers = f.arr("servers");
            let mut s = format!("{} edge servers are registered.", f.s("count"));
            if let Some(b) = extreme(servers, "max_utilization", true) {
                s.push(' ');
                s.push_str(&format!("The busiest is server {} at peak utilization {}.", fmt_value(&b["server"]), fmt_value(&b["max_utilization"])));
            }
            for srv in servers {
                s.push(' ');
                s.push_str(&server_sentence(&F(srv)));
            }
            s
        }
        "slice_members" => slice_sentence(&f),
        "slice_all" => {
            let mut s = format!("{} slices are configured.", f.s("count"));
            for sl in f.arr("slices") {
                s.push(' ');
                s.push_str(&slice_sentence(&F(sl)));
            }
            s
        }
        "sim_advance" => format!(
            "The simulator advanced {} ticks to tick {} at state version {}.",
            f.s("ticks"), f.s("tick"), f.s("state_version")
        ),
        "handover_command" => format!("A handover of UE {} to cell {} is queued for the next tick.", f.s("ue"), f.s("target_cell")),
        "set_prb_quota" => format!("Cell {} PRB quota is set to {} from the next tick.", f.s("cell"), f.s("prbs")),
        "profile_services" => {
            let mut s = format!("{} services match the requirement.", f.s("count"));
            if let Some(top) = f.arr("recommendations").first() {
                let t = F(top);
                s.push_str(&format!(
                    " The top recommendation is service {} ({}) with {} latency at accuracy tier {}.",
                    t.s("service"), t.s("name"), t.s("latency_class"), t.s("accuracy_tier")
                ));
            }
            s
        }
        "subscribe_service" => {
            let mut s = format!("Subscribed to service {} as subscription {}", f.s("service"), f.s("subscription"));
            if f.has("deployment_state") {
                s.push_str(&format!("; deployment {} is {} on server {}", f.s("deployment"), f.s("deployment_state"), f.s("server")));
            }
            s.push_str(&format!(" with {} subscribers in total.", f.s("subscribers")));
            s
        }
        "unsubscribe_service" => {
            let mut s = format!("Unsubscribed from service {}", f.s("service"));
            if f.has("deployment_state") {
                s.push_str(&format!(" and deployment {} on server {} was torn down", f.s("deployment"), f.s("server")));
            }
            s.push_str(&format!("; {} subscribers remain.", f.s("subscribers")));
            s
        }
        other => format!("The {} result was retrieved.", other.replace('_', " ")),
    }
}

fn bs_sentence(f: &F<'_>) -> String {
    format!(
        "BS {} serves {} UEs at mean load {} with throughput {} Mbps and backhaul utilization {} of {} Mbps.",
        f.s("bs"), f.s("ue_count"), f.s("mean_load"), f.s("throughput_mbps"), f.s("backhaul_utilization"), f.s("backhaul_mbps")
    )
}

fn server_sentence(f: &F<'_>) -> String {
    format!(
        "Server {} at BS {} hosts {} deployments with CPU utilization {}, GPU utilization {} and memory utilization {}.",
        f.s("server"), f.s("bs"), f.s("deployment_count"), f.s("cpu_utilization"), f.s("gpu_utilization"), f.s("mem_utilization")
    )
}

fn slice_sentence(f: &F<'_>) -> String {
    format!(
        "Slice {} ({}) has {} UEs with throughput {} Mbps.",
        f.s("slice"), f.s("name"), f.s("count"), f.s("throughput_mbps")
    )
}
