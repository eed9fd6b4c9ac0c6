//! The assembled testbed: one tick owner over the radio world, RIC, edge
//! manager and history, plus the canonical knowledge sources over it.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::edge::{
    AiServiceSpec, DeploymentState, EdgeError, EdgeManager, EdgeServerConfig, UserRequirement,
};
use crate::ids::{BsId, CellId, ServerId, ServiceId, SliceId, UeId};
use crate::knowledge::{
    Capability, Handler, HistoryStore, KnowledgeError, KnowledgeQuery, KnowledgeRouter,
    QueryResult, RouteMatch, SourceDescriptor, Versioned, DEFAULT_HISTORY_DEPTH,
};
use crate::ric::{
    instantiate_xapp, ControlAction, ControlPayload, Ric, RicError, SubscriptionOutcome,
    SubscriptionRequest, XAppManifest,
};
use crate::sim::{EventPayload, NetworkEvent, SimCommand, SimConfig, SimError, TickReport, World};

#[derive(Debug, Error)]
pub enum TestbedError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Ric(#[from] RicError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid testbed config: {0}")]
    Config(String),
}

fn default_pull_delay() -> u32 {
    2
}

fn default_history_depth() -> usize {
    DEFAULT_HISTORY_DEPTH
}

/// Testbed configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub catalog: Vec<AiServiceSpec>,
    #[serde(default)]
    pub edge_servers: Vec<EdgeServerConfig>,
    #[serde(default)]
    pub xapps: Vec<XAppManifest>,
    #[serde(default = "default_pull_delay")]
    pub pull_delay_ticks: u32,
    #[serde(default = "default_history_depth")]
    pub history_depth: usize,
    #[serde(default)]
    pub warmup_ticks: u64,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self::preset("desk-3cell").expect("bundled preset parses")
    }
}

pub const PRESETS: [(&str, &str); 2] = [
    ("desk-3cell", include_str!("../presets/desk-3cell.json")),
    ("desk-7cell", include_str!("../presets/desk-7cell.json")),
];

impl TestbedConfig {
    pub fn preset(name: &str) -> Result<Self, TestbedError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| TestbedError::UnknownPreset(name.to_string()))?;
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self, TestbedError> {
        serde_json::from_str(text).map_err(|e| TestbedError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TestbedError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TestbedError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// World, RIC, edge manager and history advanced together, one tick at a time.
#[derive(Debug)]
pub struct Testbed {
    world: World,
    ric: Ric,
    edge: EdgeManager,
    history: HistoryStore,
    queued: Vec<ControlAction>,
    applied: u64,
}

impl Versioned for Testbed {
    fn state_version(&self) -> u64 {
        self.world.state_version()
    }
}

impl Testbed {
    pub fn new(config: &TestbedConfig) -> Result<Self, TestbedError> {
        let mut world = World::from_config(&config.sim)?;
        for server in &config.edge_servers {
            if world.base_station(server.base_station).is_none() {
                return Err(TestbedError::Config(format!(
                    "edge server {} references unknown base station {}",
                    server.id, server.base_station
                )));
            }
            world.register_edge_server(server.id);
        }
        let edge = EdgeManager::new(
            config.catalog.clone(),
            &config.edge_servers,
            config.pull_delay_ticks,
        )?;
        let mut ric = Ric::new();
        for manifest in &config.xapps {
            let (descriptor, app) = instantiate_xapp(manifest)?;
            ric.register_xapp(descriptor, app)?;
        }
        let mut tb = Self {
            world,
            ric,
            edge,
            history: HistoryStore::new(config.history_depth),
            queued: Vec::new(),
            applied: 0,
        };
        for _ in 0..config.warmup_ticks {
            tb.tick();
        }
        Ok(tb)
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn ric(&self) -> &Ric {
        &self.ric
    }

    pub fn ric_mut(&mut self) -> &mut Ric {
        &mut self.ric
    }

    pub fn edge(&self) -> &EdgeManager {
        &self.edge
    }

    pub fn history(&self) -> &HistoryStore {
        &self.history
    }

    /// RIC actions waiting for the next tick.
    pub fn queued_actions(&self) -> &[ControlAction] {
        &self.queued
    }

    /// Count of RIC actions applied so far.
    pub fn applied_actions(&self) -> u64 {
        self.applied
    }

    /// Advances one tick. Actions queued by xApps during the previous tick
    /// are applied first; the events of this tick are then fanned out and
    /// their actions queued for the next one.
    pub fn tick(&mut self) -> TickReport {
        let next = self.world.tick() + 1;
        let mut extra = Vec::new();
        for action in std::mem::take(&mut self.queued) {
            self.applied += 1;
            match action.payload {
                ControlPayload::HandoverCommand { ue, target } => {
                    self.world.enqueue(SimCommand::Handover { ue, target });
                }
                ControlPayload::PRBQuotaChange { cell, prbs } => {
                    self.world.enqueue(SimCommand::PrbQuota { cell, prbs });
                }
                ControlPayload::AIServiceScale { service, delta } => {
                    extra.extend(self.scale(service, delta, next));
                }
            }
        }
        for t in self.edge.advance_tick() {
            extra.push(NetworkEvent {
                tick: next,
                payload: EventPayload::AIServiceEvent {
                    service: t.service,
                    deployment: t.deployment,
                    state: t.state.as_str().to_string(),
                },
            });
        }

        let report = self.world.step_with(extra);
        for event in &report.events {
            let actions = self.ric.dispatch_event(event, &self.world);
            self.queued.extend(actions);
        }
        self.record_history(report.tick);
        report
    }

    pub fn run(&mut self, ticks: u64) -> Vec<TickReport> {
        (0..ticks).map(|_| self.tick()).collect()
    }

    fn scale(&mut self, service: ServiceId, delta: i32, tick: u64) -> Vec<NetworkEvent> {
        let mut events = Vec::new();
        let mut emit = |id, state: DeploymentState| {
            events.push(NetworkEvent {
                tick,
                payload: EventPayload::AIServiceEvent {
                    service,
                    deployment: id,
                    state: state.as_str().to_string(),
                },
            })
        };
        if delta > 0 {
            for _ in 0..delta {
                match self.edge.place_and_deploy(service) {
                    Ok(d) => emit(d.id, d.state),
                    Err(e) => {
                        tracing::debug!(%service, error = %e, "scale-out skipped");
                        break;
                    }
                }
            }
        } else {
            // Scale in idle secondaries, newest first; the primary stays.
            let primary = self.edge.primary_deployment(service).map(|d| d.id);
            let mut idle: Vec<_> = self
                .edge
                .live_deployments(service)
                .filter(|d| d.refcount == 0 && Some(d.id) != primary)
                .map(|d| d.id)
                .collect();
            idle.reverse();
            for id in idle.into_iter().take(delta.unsigned_abs() as usize) {
                if let Ok(d) = self.edge.teardown(id) {
                    emit(d.id, d.state);
                }
            }
        }
        events
    }

    fn record_history(&mut self, tick: u64) {
        for ue in self.world.ues() {
            let snapshot = json!({
                "position": {"x": r4(ue.position.x), "y": r4(ue.position.y)},
                "serving_cell": ue.serving_cell,
                "sinr_db": r4(ue.serving_report().map_or(f64::NAN, |r| r.sinr)),
                "allocated_prbs": ue.allocated_prbs,
                "throughput_mbps": r4(ue.throughput_mbps),
            });
            let _ = self.history.record_history(&format!("ue/{}", ue.id), tick, snapshot);
        }
        for cell in self.world.cells() {
            let snapshot = json!({
                "load": r4(cell.load),
                "allocated_prbs": cell.allocated_prbs,
                "demand_prbs": cell.demand_prbs,
            });
            let _ = self
                .history
                .record_history(&format!("cell/{}", cell.id), tick, snapshot);
        }
    }

    /// Queues a handover for the next tick.
    pub fn command_handover(&mut self, ue: UeId, target: CellId) -> Result<(), TestbedError> {
        self.world.ue(ue).ok_or(SimError::UnknownUe(ue))?;
        self.world.cell(target).ok_or(SimError::UnknownCell(target))?;
        self.world.enqueue(SimCommand::Handover { ue, target });
        self.world.touch();
        Ok(())
    }

    /// Queues a PRB quota change for the next tick.
    pub fn set_prb_quota(&mut self, cell: CellId, prbs: u32) -> Result<(), TestbedError> {
        self.world.cell(cell).ok_or(SimError::UnknownCell(cell))?;
        self.world.enqueue(SimCommand::PrbQuota { cell, prbs });
        self.world.touch();
        Ok(())
    }

    pub fn profile(&self, req: &UserRequirement) -> Result<Vec<AiServiceSpec>, TestbedError> {
        Ok(self.edge.profile(req)?)
    }

    /// Subscribes or unsubscribes through the RIC. Deployments started or
    /// stopped here surface as AI service events in the next tick report.
    pub fn manage_subscription(
        &mut self,
        request: &SubscriptionRequest,
    ) -> Result<SubscriptionOutcome, TestbedError> {
        let outcome = self.ric.manage_ai_subscription(request, &mut self.edge)?;
        for d in outcome.deployed.iter().chain(&outcome.torn_down) {
            self.world.push_event(EventPayload::AIServiceEvent {
                service: d.service_id,
                deployment: d.id,
                state: d.state.as_str().to_string(),
            });
        }
        self.world.touch();
        Ok(outcome)
    }
}

fn r4(x: f64) -> f64 {
    if x.is_finite() {
        (x * 1e4).round() / 1e4
    } else {
        x
    }
}

/// A testbed behind a read/write lock with its knowledge router. Every query
/// runs under one read lock, so each response reflects a single version.
#[derive(Clone)]
pub struct SharedTestbed {
    inner: Arc<RwLock<Testbed>>,
    router: Arc<KnowledgeRouter<Testbed>>,
}

impl std::fmt::Debug for SharedTestbed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharedTestbed")
            .field("state_version", &self.read().state_version())
            .finish()
    }
}

impl SharedTestbed {
    pub fn new(testbed: Testbed) -> Self {
        Self {
            inner: Arc::new(RwLock::new(testbed)),
            router: Arc::new(canonical_router()),
        }
    }

    pub fn from_config(config: &TestbedConfig) -> Result<Self, TestbedError> {
        Ok(Self::new(Testbed::new(config)?))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Testbed> {
        self.inner.read()
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Testbed> {
        self.inner.write()
    }

    pub fn router(&self) -> &KnowledgeRouter<Testbed> {
        &self.router
    }

    pub fn query(&self, query: &KnowledgeQuery) -> Result<QueryResult, KnowledgeError> {
        let tb = self.inner.read();
        self.router.query_cached(&tb, query)
    }

    pub fn query_uncached(&self, query: &KnowledgeQuery) -> Result<QueryResult, KnowledgeError> {
        let tb = self.inner.read();
        self.router.route(&tb, query)
    }

    pub fn state_version(&self) -> u64 {
        self.inner.read().state_version()
    }

    pub fn tick(&self, n: u64) -> u64 {
        let mut tb = self.inner.write();
        tb.run(n);
        tb.state_version()
    }
}

type Source = fn(&Testbed, &KnowledgeQuery, &RouteMatch) -> Result<Value, String>;

/// The canonical namespace answered over a [`Testbed`].
pub const CANONICAL_SOURCES: [(&str, &[&str], bool, Source); 15] = [
    ("ue_status", &["ue/*/status"], false, ue_status),
    ("ue_history", &["ue/*/history"], true, ue_history),
    ("ue_list", &["ue/_all"], false, ue_list),
    ("cell_load", &["cell/*/load"], false, cell_load),
    ("cell_kpi", &["cell/*/kpi"], false, cell_kpi),
    ("cell_history", &["cell/*/history"], true, cell_history),
    ("cell_list", &["cell/_all"], false, cell_list),
    ("bs_summary", &["bs/*/summary", "bs/_all"], false, bs_summary),
    ("ric_xapps", &["ric/xapps"], false, ric_xapps),
    ("ric_subscriptions", &["ric/subscriptions"], false, ric_subscriptions),
    ("ai_service_status", &["ai_service/*/status"], false, ai_service_status),
    ("ai_service_list", &["ai_service/_all"], false, ai_service_list),
    ("edge_server_utilization", &["edge_server/*/utilization"], false, edge_server_utilization),
    ("edge_server_list", &["edge_server/_all"], false, edge_server_list),
    ("slice_members", &["slice/*/members", "slice/_all"], false, slice_members),
];

pub fn canonical_router() -> KnowledgeRouter<Testbed> {
    let mut router = KnowledgeRouter::new();
    for (name, patterns, historical, f) in CANONICAL_SOURCES {
        let caps: &[Capability] = if historical {
            &[Capability::CurrentState, Capability::Historical]
        } else {
            &[Capability::CurrentState]
        };
        let handler: Handler<Testbed> = Arc::new(f);
        router
            .register_source(SourceDescriptor::new(name, patterns, caps), handler)
            .expect("canonical patterns are distinct");
    }
    router
}

fn allow_params(q: &KnowledgeQuery, allowed: &[&str]) -> Result<(), String> {
    match q.params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(format!("unsupported parameter {k:?} for {}", q.path)),
        None => Ok(()),
    }
}

fn parse_id<T: From<u32>>(raw: &str, kind: &str) -> Result<T, String> {
    raw.parse::<u32>()
        .map(T::from)
        .map_err(|_| format!("invalid {kind} id {raw:?}"))
}

fn param_id<T: From<u32>>(q: &KnowledgeQuery, key: &str) -> Result<Option<T>, String> {
    q.params.get(key).map(|v| parse_id(v, key)).transpose()
}

fn capture<T: From<u32>>(m: &RouteMatch, kind: &str) -> Result<T, String> {
    parse_id(m.captures.first().ok_or("missing id")?, kind)
}

fn ue_json(tb: &Testbed, ue: &crate::sim::Ue) -> Value {
    let serving = ue.serving_report();
    json!({
        "ue": ue.id,
        "serving_cell": ue.serving_cell,
        "slice": ue.slice_id,
        "position": {"x": r4(ue.position.x), "y": r4(ue.position.y)},
        "velocity": {"x": r4(ue.velocity.x), "y": r4(ue.velocity.y)},
        "rsrp_dbm": serving.map(|r| r4(r.rsrp)),
        "sinr_db": serving.map(|r| r4(r.sinr)),
        "traffic_demand": ue.traffic_demand,
        "allocated_prbs": ue.allocated_prbs,
        "throughput_mbps": r4(ue.throughput_mbps),
        "handovers": ue.handovers,
        "tick": tb.world.tick(),
    })
}

fn ue_status(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let id: UeId = capture(m, "ue")?;
    let ue = tb.world.ue(id).ok_or_else(|| format!("unknown ue {id}"))?;
    Ok(ue_json(tb, ue))
}

fn window_param(q: &KnowledgeQuery) -> Result<u64, String> {
    allow_params(q, &["window"])?;
    match q.params.get("window") {
        None => Ok(10),
        Some(w) => w
            .parse::<u64>()
            .ok()
            .filter(|w| *w > 0)
            .ok_or_else(|| format!("invalid window {w:?}")),
    }
}

fn history_payload(tb: &Testbed, kind: &str, id: u32, window: u64) -> Result<Value, String> {
    let path = format!("{kind}/{id}");
    let records = tb
        .history
        .get_history(&path, window, tb.world.tick())
        .map_err(|e| e.to_string())?;
    let records: Vec<Value> = records
        .into_iter()
        .map(|r| {
            let mut snap = match r.snapshot {
                Value::Object(m) => m,
                other => Map::from_iter([("value".to_string(), other)]),
            };
            snap.insert("tick".into(), json!(r.tick));
            Value::Object(snap)
        })
        .collect();
    let mut out = Map::new();
    out.insert(kind.to_string(), json!(id));
    out.insert("window".into(), json!(window));
    out.insert("count".into(), json!(records.len()));
    out.insert("records".into(), Value::Array(records));
    Ok(Value::Object(out))
}

fn ue_history(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    let window = window_param(q)?;
    let id: UeId = capture(m, "ue")?;
    tb.world.ue(id).ok_or_else(|| format!("unknown ue {id}"))?;
    history_payload(tb, "ue", id.0, window)
}

fn cell_history(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    let window = window_param(q)?;
    let id: CellId = capture(m, "cell")?;
    tb.world.cell(id).ok_or_else(|| format!("unknown cell {id}"))?;
    history_payload(tb, "cell", id.0, window)
}

fn ue_list(tb: &Testbed, q: &KnowledgeQuery, _: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &["cell", "slice"])?;
    let cell: Option<CellId> = param_id(q, "cell")?;
    let slice: Option<SliceId> = param_id(q, "slice")?;
    if let Some(c) = cell {
        tb.world.cell(c).ok_or_else(|| format!("unknown cell {c}"))?;
    }
    if let Some(s) = slice {
        tb.world.slice(s).ok_or_else(|| format!("unknown slice {s}"))?;
    }
    let ues: Vec<Value> = tb
        .world
        .ues()
        .filter(|u| cell.is_none_or(|c| u.serving_cell == c))
        .filter(|u| slice.is_none_or(|s| u.slice_id == s))
        .map(|u| {
            json!({
                "ue": u.id,
                "serving_cell": u.serving_cell,
                "slice": u.slice_id,
                "sinr_db": u.serving_report().map(|r| r4(r.sinr)),
                "allocated_prbs": u.allocated_prbs,
                "throughput_mbps": r4(u.throughput_mbps),
            })
        })
        .collect();
    let total: f64 = tb
        .world
        .ues()
        .filter(|u| cell.is_none_or(|c| u.serving_cell == c))
        .filter(|u| slice.is_none_or(|s| u.slice_id == s))
        .map(|u| u.throughput_mbps)
        .sum();
    Ok(json!({
        "count": ues.len(),
        "total_throughput_mbps": r4(total),
        "ues": ues,
    }))
}

struct CellStats {
    ue_count: usize,
    throughput: f64,
    mean_sinr: Option<f64>,
    min_sinr: Option<f64>,
}

fn cell_stats(tb: &Testbed, cell: CellId) -> CellStats {
    let served: Vec<_> = tb.world.ues().filter(|u| u.serving_cell == cell).collect();
    let sinrs: Vec<f64> = served
        .iter()
        .filter_map(|u| u.serving_report().map(|r| r.sinr))
        .collect();
    CellStats {
        ue_count: served.len(),
        throughput: served.iter().map(|u| u.throughput_mbps).sum(),
        mean_sinr: (!sinrs.is_empty()).then(|| sinrs.iter().sum::<f64>() / sinrs.len() as f64),
        min_sinr: sinrs.iter().copied().reduce(f64::min),
    }
}

fn cell_load(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let id: CellId = capture(m, "cell")?;
    let c = tb.world.cell(id).ok_or_else(|| format!("unknown cell {id}"))?;
    Ok(json!({
        "cell": c.id,
        "load": r4(c.load),
        "allocated_prbs": c.allocated_prbs,
        "prb_capacity": c.prb_capacity,
        "prb_quota": c.prb_quota,
        "ue_count": cell_stats(tb, id).ue_count,
    }))
}

fn cell_kpi(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let id: CellId = capture(m, "cell")?;
    let c = tb.world.cell(id).ok_or_else(|| format!("unknown cell {id}"))?;
    let s = cell_stats(tb, id);
    Ok(json!({
        "cell": c.id,
        "bs": c.base_station,
        "load": r4(c.load),
        "ue_count": s.ue_count,
        "throughput_mbps": r4(s.throughput),
        "mean_sinr_db": s.mean_sinr.map(r4),
        "min_sinr_db": s.min_sinr.map(r4),
        "demand_prbs": c.demand_prbs,
        "allocated_prbs": c.allocated_prbs,
        "unserved_prbs": c.demand_prbs.saturating_sub(c.allocated_prbs),
        "handovers_in": c.handovers_in,
        "handovers_out": c.handovers_out,
    }))
}

fn cell_list(tb: &Testbed, q: &KnowledgeQuery, _: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let mut most: Option<(CellId, f64)> = None;
    let mut least: Option<(CellId, f64)> = None;
    let mut cells = Vec::new();
    for c in tb.world.cells() {
        if most.is_none_or(|(_, l)| c.load > l) {
            most = Some((c.id, c.load));
        }
        if least.is_none_or(|(_, l)| c.load < l) {
            least = Some((c.id, c.load));
        }
        cells.push(json!({
            "cell": c.id,
            "bs": c.base_station,
            "load": r4(c.load),
            "ue_count": cell_stats(tb, c.id).ue_count,
        }));
    }
    let n = cells.len();
    let mean = tb.world.cells().map(|c| c.load).sum::<f64>() / n.max(1) as f64;
    Ok(json!({
        "count": n,
        "cells": cells,
        "most_loaded_cell": most.map(|m| m.0),
        "max_load": most.map(|m| r4(m.1)),
        "least_loaded_cell": least.map(|m| m.0),
        "min_load": least.map(|m| r4(m.1)),
        "mean_load": r4(mean),
    }))
}

fn bs_json(tb: &Testbed, id: BsId) -> Result<Value, String> {
    let bs = tb
        .world
        .base_station(id)
        .ok_or_else(|| format!("unknown bs {id}"))?;
    let mut throughput = 0.0;
    let mut ues = 0;
    let mut load = 0.0;
    for c in &bs.cells {
        let s = cell_stats(tb, *c);
        throughput += s.throughput;
        ues += s.ue_count;
        load += tb.world.cell(*c).map_or(0.0, |c| c.load);
    }
    let servers: Vec<ServerId> = tb
        .edge
        .servers()
        .filter(|s| s.base_station == id)
        .map(|s| s.id)
        .collect();
    Ok(json!({
        "bs": bs.id,
        "cells": bs.cells,
        "ue_count": ues,
        "mean_load": r4(load / bs.cells.len().max(1) as f64),
        "throughput_mbps": r4(throughput),
        "backhaul_mbps": bs.backhaul_mbps,
        "backhaul_utilization": r4(throughput / bs.backhaul_mbps),
        "edge_servers": servers,
    }))
}

fn bs_summary(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    if m.captures.is_empty() {
        let stations = tb
            .world
            .base_stations()
            .map(|b| bs_json(tb, b.id))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(json!({"count": stations.len(), "base_stations": stations}));
    }
    bs_json(tb, capture(m, "bs")?)
}

fn ric_xapps(tb: &Testbed, q: &KnowledgeQuery, _: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let xapps: Vec<Value> = tb
        .ric
        .descriptors()
        .map(|d| {
            json!({
                "id": d.id,
                "name": d.name,
                "state": d.state,
                "subscriptions": d.subscriptions,
                "errors": tb.ric.error_log().iter().filter(|e| e.xapp == d.id).count(),
            })
        })
        .collect();
    Ok(json!({
        "count": xapps.len(),
        "xapps": xapps,
        "queued_actions": tb.queued.len(),
        "applied_actions": tb.applied,
    }))
}

fn ric_subscriptions(tb: &Testbed, q: &KnowledgeQuery, _: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let subs = tb.ric.subscriptions();
    let active = subs
        .iter()
        .filter(|s| s.status == crate::ric::SubscriptionStatus::Active)
        .count();
    Ok(json!({"count": subs.len(), "active": active, "subscriptions": subs}))
}

fn service_state(tb: &Testbed, id: ServiceId) -> &'static str {
    let mut best: Option<DeploymentState> = None;
    for d in tb.edge.live_deployments(id) {
        if best.is_none_or(|b| d.state > b) {
            best = Some(d.state);
        }
    }
    best.map_or("NotDeployed", |s| s.as_str())
}

fn ai_service_status(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let id: ServiceId = capture(m, "service")?;
    let spec = tb
        .edge
        .service(id)
        .ok_or_else(|| format!("unknown service {id}"))?;
    let deployments: Vec<Value> = tb
        .edge
        .live_deployments(id)
        .map(|d| {
            json!({
                "deployment": d.id,
                "server": d.server_id,
                "state": d.state,
                "refcount": d.refcount,
            })
        })
        .collect();
    Ok(json!({
        "service": spec.id,
        "name": spec.name,
        "modality": spec.modality,
        "latency_class": spec.latency_class,
        "accuracy_tier": spec.accuracy_tier,
        "image_ref": spec.image_ref,
        "state": service_state(tb, id),
        "instances": deployments.len(),
        "deployments": deployments,
        "subscribers": tb.ric.active_subscriptions(id),
    }))
}

fn ai_service_list(tb: &Testbed, q: &KnowledgeQuery, _: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let services: Vec<Value> = tb
        .edge
        .catalog()
        .map(|s| {
            json!({
                "service": s.id,
                "name": s.name,
                "modality": s.modality,
                "state": service_state(tb, s.id),
                "instances": tb.edge.live_deployments(s.id).count(),
                "subscribers": tb.ric.active_subscriptions(s.id),
            })
        })
        .collect();
    let running = tb
        .edge
        .deployments()
        .filter(|d| d.state == DeploymentState::Running)
        .count();
    Ok(json!({"count": services.len(), "running_deployments": running, "services": services}))
}

fn server_json(tb: &Testbed, id: ServerId) -> Result<Value, String> {
    let s = tb
        .edge
        .server(id)
        .ok_or_else(|| format!("unknown server {id}"))?;
    let [cpu, gpu, mem] = s.utilization();
    Ok(json!({
        "server": s.id,
        "bs": s.base_station,
        "cpu_utilization": r4(cpu),
        "gpu_utilization": r4(gpu),
        "mem_utilization": r4(mem),
        "max_utilization": r4(cpu.max(gpu).max(mem)),
        "deployment_count": s.deployments.len(),
        "deployments": s.deployments,
    }))
}

fn edge_server_utilization(
    tb: &Testbed,
    q: &KnowledgeQuery,
    m: &RouteMatch,
) -> Result<Value, String> {
    allow_params(q, &[])?;
    server_json(tb, capture(m, "server")?)
}

fn edge_server_list(tb: &Testbed, q: &KnowledgeQuery, _: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let servers = tb
        .edge
        .servers()
        .map(|s| server_json(tb, s.id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({"count": servers.len(), "servers": servers}))
}

fn slice_members(tb: &Testbed, q: &KnowledgeQuery, m: &RouteMatch) -> Result<Value, String> {
    allow_params(q, &[])?;
    let one = |id: SliceId| -> Result<Value, String> {
        let s = tb
            .world
            .slice(id)
            .ok_or_else(|| format!("unknown slice {id}"))?;
        let throughput: f64 = s
            .admitted_ues
            .iter()
            .filter_map(|u| tb.world.ue(*u))
            .map(|u| u.throughput_mbps)
            .sum();
        Ok(json!({
            "slice": s.id,
            "name": s.name,
            "count": s.admitted_ues.len(),
            "ues": s.admitted_ues,
            "throughput_mbps": r4(throughput),
        }))
    };
    if m.captures.is_empty() {
        let slices = tb
            .world
            .slices()
            .map(|s| one(s.id))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(json!({"count": slices.len(), "slices": slices}));
    }
    one(capture(m, "slice")?)
}

/// Per-cell load map, handy for callers that don't need a full query.
pub fn cell_loads(tb: &Testbed) -> BTreeMap<CellId, f64> {
    tb.world.cells().map(|c| (c.id, c.load)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ric::{SubscriptionAction, Subscriber};

    fn shared() -> SharedTestbed {
        SharedTestbed::from_config(&TestbedConfig::default()).unwrap()
    }

    #[test]
    fn presets_build() {
        for (name, _) in PRESETS {
            let tb = Testbed::new(&TestbedConfig::preset(name).unwrap()).unwrap();
            assert!(tb.world().ues().count() > 0, "{name}");
            tb.world().check_invariants().unwrap();
        }
        assert!(matches!(
            TestbedConfig::preset("nope"),
            Err(TestbedError::UnknownPreset(_))
        ));
    }

    #[test]
    fn one_version_per_tick() {
        let s = shared();
        let v0 = s.state_version();
        assert_eq!(s.tick(100), v0 + 100);
    }

    #[test]
    fn canonical_paths_answer() {
        let s = shared();
        s.tick(5);
        for path in [
            "ue/1/status",
            "ue/1/history",
            "ue/_all",
            "cell/2/load",
            "cell/2/kpi",
            "cell/2/history",
            "cell/_all",
            "bs/1/summary",
            "bs/_all",
            "ric/xapps",
            "ric/subscriptions",
            "ai_service/1/status",
            "ai_service/_all",
            "edge_server/1/utilization",
            "edge_server/_all",
            "slice/1/members",
            "slice/_all",
        ] {
            let r = s.query(&KnowledgeQuery::new(path));
            assert!(r.is_ok(), "{path}: {r:?}");
        }
    }

    #[test]
    fn unknown_ids_and_params_fail() {
        let s = shared();
        assert!(matches!(
            s.query(&KnowledgeQuery::new("ue/999/status")),
            Err(KnowledgeError::SourceFailure { .. })
        ));
        assert!(matches!(
            s.query(&KnowledgeQuery::new("cell/1/load").param("x", "1")),
            Err(KnowledgeError::SourceFailure { .. })
        ));
        assert!(matches!(
            s.query(&KnowledgeQuery::new("core/unknown")),
            Err(KnowledgeError::NotRouted(_))
        ));
    }

    #[test]
    fn ue_list_filters() {
        let s = shared();
        s.tick(3);
        let all = s.query(&KnowledgeQuery::new("ue/_all")).unwrap().payload;
        let c2 = s
            .query(&KnowledgeQuery::new("ue/_all").param("cell", "2"))
            .unwrap()
            .payload;
        assert_eq!(all["count"], json!(s.read().world().ues().count()));
        let expected = s.read().world().ues().filter(|u| u.serving_cell == CellId(2)).count();
        assert_eq!(c2["count"], json!(expected));
    }

    #[test]
    fn cell_list_aggregates_match_cells() {
        let s = shared();
        s.tick(4);
        let p = s.query(&KnowledgeQuery::new("cell/_all")).unwrap().payload;
        let loads = cell_loads(&s.read());
        let max = loads.values().cloned().fold(f64::MIN, f64::max);
        assert_eq!(p["max_load"].as_f64().unwrap(), r4(max));
        let most = loads.iter().find(|(_, l)| **l == max).unwrap().0;
        assert_eq!(p["most_loaded_cell"], json!(most));
    }

    #[test]
    fn subscription_deploys_and_reports() {
        let s = shared();
        let req = SubscriptionRequest {
            service_id: ServiceId(1),
            subscriber: Subscriber::Session("s1".into()),
            action: SubscriptionAction::Subscribe,
        };
        let v = s.state_version();
        let out = s.write().manage_subscription(&req).unwrap();
        assert!(out.deployed.is_some());
        assert!(s.state_version() > v);
        let report = s.write().tick();
        assert!(report
            .events
            .iter()
            .any(|e| matches!(e.payload, EventPayload::AIServiceEvent { .. })));
        s.tick(2);
        let status = s.query(&KnowledgeQuery::new("ai_service/1/status")).unwrap().payload;
        assert_eq!(status["state"], json!("Running"));
        assert_eq!(status["subscribers"], json!(1));
    }

    #[test]
    fn load_balancer_actions_are_applied_next_tick() {
        let mut tb = Testbed::new(&TestbedConfig::default()).unwrap();
        let mut saw_queue = false;
        for _ in 0..50 {
            let before = tb.queued_actions().len() as u64;
            let applied = tb.applied_actions();
            tb.tick();
            assert_eq!(tb.applied_actions(), applied + before);
            saw_queue |= before > 0;
            tb.world().check_invariants().unwrap();
            tb.edge().check_ledger().unwrap();
        }
        assert!(saw_queue, "preset should exercise the load balancer");
    }

    #[test]
    fn history_window_param() {
        let s = shared();
        s.tick(20);
        let p = s
            .query(&KnowledgeQuery::new("ue/1/history").param("window", "5"))
            .unwrap()
            .payload;
        assert_eq!(p["count"], json!(5));
        let h = s.query(&KnowledgeQuery::new("ue/1/history").history()).unwrap();
        assert_eq!(h.source, "ue_history");
    }

    #[test]
    fn commands_validate_targets() {
        let mut tb = Testbed::new(&TestbedConfig::default()).unwrap();
        assert!(tb.command_handover(UeId(999), CellId(1)).is_err());
        assert!(tb.set_prb_quota(CellId(99), 10).is_err());
        tb.set_prb_quota(CellId(1), 10).unwrap();
        tb.tick();
        assert!(tb.world().cell(CellId(1)).unwrap().allocated_prbs <= 10);
    }
}
