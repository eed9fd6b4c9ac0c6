//! RAN intelligent controller: xApp registry and lifecycle, synchronous event
//! fan-out, the load-balancing xApp, and AI service subscriptions.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{Deployment, EdgeError, EdgeManager};
use crate::ids::{CellId, DeploymentId, ServiceId, UeId};
use crate::sim::{EventKind, NetworkEvent, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum XAppState {
    Registered,
    Active,
    Stopped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XAppDescriptor {
    pub id: String,
    pub name: String,
    pub subscriptions: BTreeSet<EventKind>,
    pub state: XAppState,
}

impl XAppDescriptor {
    pub fn new(id: impl Into<String>, name: impl Into<String>, kinds: &[EventKind]) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            subscriptions: kinds.iter().copied().collect(),
            state: XAppState::Registered,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlKind {
    HandoverCommand,
    PRBQuotaChange,
    AIServiceScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum ControlPayload {
    HandoverCommand { ue: UeId, target: CellId },
    PRBQuotaChange { cell: CellId, prbs: u32 },
    AIServiceScale { service: ServiceId, delta: i32 },
}

impl ControlPayload {
    pub fn kind(&self) -> ControlKind {
        match self {
            ControlPayload::HandoverCommand { .. } => ControlKind::HandoverCommand,
            ControlPayload::PRBQuotaChange { .. } => ControlKind::PRBQuotaChange,
            ControlPayload::AIServiceScale { .. } => ControlKind::AIServiceScale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub issuer: String,
    pub tick: u64,
    #[serde(flatten)]
    pub payload: ControlPayload,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct XAppError(pub String);

/// A control application hosted by the RIC.
pub trait XApp: Send + Sync {
    fn on_event(
        &mut self,
        event: &NetworkEvent,
        world: &World,
    ) -> Result<Vec<ControlPayload>, XAppError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XAppErrorRecord {
    pub xapp: String,
    pub tick: u64,
    pub event: EventKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subscriber {
    Ue(UeId),
    Session(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubscriptionStatus {
    Requested,
    Active,
    Terminated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AiSubscription {
    pub id: u32,
    pub service_id: ServiceId,
    pub subscriber: Subscriber,
    pub status: SubscriptionStatus,
    pub deployment: Option<DeploymentId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubscriptionAction {
    Subscribe,
    Unsubscribe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionRequest {
    pub service_id: ServiceId,
    pub subscriber: Subscriber,
    pub action: SubscriptionAction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubscriptionOutcome {
    pub subscription: AiSubscription,
    /// Set when this request started a new deployment.
    pub deployed: Option<Deployment>,
    /// Set when this request released the last subscriber of a deployment.
    pub torn_down: Option<Deployment>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RicError {
    #[error("xApp {0} is already registered")]
    DuplicateXApp(String),
    #[error("unknown xApp {0}")]
    UnknownXApp(String),
    #[error("no built-in xApp named {0:?}")]
    UnknownXAppKind(String),
    #[error("invalid xApp manifest: {0}")]
    Manifest(String),
    #[error("unknown AI service {0}")]
    UnknownService(ServiceId),
    #[error("{subscriber:?} already holds an active subscription to service {service}")]
    DuplicateSubscription {
        service: ServiceId,
        subscriber: Subscriber,
    },
    #[error("{subscriber:?} has no active subscription to service {service}")]
    UnknownSubscription {
        service: ServiceId,
        subscriber: Subscriber,
    },
    #[error(transparent)]
    Edge(#[from] EdgeError),
}

struct Hosted {
    descriptor: XAppDescriptor,
    app: Box<dyn XApp>,
}

/// xApp registry, event dispatcher and AI subscription book.
#[derive(Default)]
pub struct Ric {
    xapps: Vec<Hosted>,
    ever_registered: BTreeSet<String>,
    error_log: Vec<XAppErrorRecord>,
    subscriptions: Vec<AiSubscription>,
}

impl std::fmt::Debug for Ric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ric")
            .field("xapps", &self.descriptors().collect::<Vec<_>>())
            .field("errors", &self.error_log.len())
            .field("subscriptions", &self.subscriptions.len())
            .finish()
    }
}

impl Ric {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers and activates an xApp. Ids are permanent: a stopped xApp's
    /// id cannot be reused.
    pub fn register_xapp(
        &mut self,
        mut descriptor: XAppDescriptor,
        app: Box<dyn XApp>,
    ) -> Result<String, RicError> {
        if !self.ever_registered.insert(descriptor.id.clone()) {
            return Err(RicError::DuplicateXApp(descriptor.id));
        }
        descriptor.state = XAppState::Active;
        let id = descriptor.id.clone();
        self.xapps.push(Hosted { descriptor, app });
        Ok(id)
    }

    pub fn stop_xapp(&mut self, id: &str) -> Result<(), RicError> {
        let hosted = self
            .xapps
            .iter_mut()
            .find(|h| h.descriptor.id == id)
            .ok_or_else(|| RicError::UnknownXApp(id.to_string()))?;
        hosted.descriptor.state = XAppState::Stopped;
        Ok(())
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &XAppDescriptor> {
        self.xapps.iter().map(|h| &h.descriptor)
    }

    pub fn descriptor(&self, id: &str) -> Option<&XAppDescriptor> {
        self.descriptors().find(|d| d.id == id)
    }

    pub fn error_log(&self) -> &[XAppErrorRecord] {
        &self.error_log
    }

    /// Delivers `event` to every Active subscriber in registration order and
    /// concatenates their actions. A failing xApp contributes nothing and
    /// leaves one error record.
    pub fn dispatch_event(&mut self, event: &NetworkEvent, world: &World) -> Vec<ControlAction> {
        let kind = event.kind();
        let mut actions = Vec::new();
        for hosted in &mut self.xapps {
            if hosted.descriptor.state != XAppState::Active
                || !hosted.descriptor.subscriptions.contains(&kind)
            {
                continue;
            }
            let app = &mut hosted.app;
            let outcome = catch_unwind(AssertUnwindSafe(|| app.on_event(event, world)));
            let message = match outcome {
                Ok(Ok(payloads)) => {
                    actions.extend(payloads.into_iter().map(|payload| ControlAction {
                        issuer: hosted.descriptor.id.clone(),
                        tick: event.tick,
                        payload,
                    }));
                    continue;
                }
                Ok(Err(e)) => e.0,
                Err(panic) => panic
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| panic.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "xApp panicked".into()),
            };
            tracing::warn!(xapp = %hosted.descriptor.id, %message, "xApp failed");
            self.error_log.push(XAppErrorRecord {
                xapp: hosted.descriptor.id.clone(),
                tick: event.tick,
                event: kind,
                message,
            });
        }
        actions
    }

    pub fn subscriptions(&self) -> &[AiSubscription] {
        &self.subscriptions
    }

    pub fn active_subscriptions(&self, service: ServiceId) -> usize {
        self.subscriptions
            .iter()
            .filter(|s| s.service_id == service && s.status == SubscriptionStatus::Active)
            .count()
    }

    /// Subscribes or unsubscribes, deploying on the first subscriber and
    /// tearing down when the last one leaves.
    pub fn manage_ai_subscription(
        &mut self,
        request: &SubscriptionRequest,
        edge: &mut EdgeManager,
    ) -> Result<SubscriptionOutcome, RicError> {
        let service = request.service_id;
        if edge.service(service).is_none() {
            return Err(RicError::UnknownService(service));
        }
        let existing = self.subscriptions.iter().position(|s| {
            s.service_id == service
                && s.subscriber == request.subscriber
                && s.status == SubscriptionStatus::Active
        });

        match request.action {
            SubscriptionAction::Subscribe => {
                if existing.is_some() {
                    return Err(RicError::DuplicateSubscription {
                        service,
                        subscriber: request.subscriber.clone(),
                    });
                }
                let mut sub = AiSubscription {
                    id: self.subscriptions.len() as u32 + 1,
                    service_id: service,
                    subscriber: request.subscriber.clone(),
                    status: SubscriptionStatus::Requested,
                    deployment: None,
                };
                let (target, deployed) = match edge.primary_deployment(service) {
                    Some(d) => (d.id, None),
                    None => {
                        let d = edge.place_and_deploy(service)?;
                        (d.id, Some(d))
                    }
                };
                edge.adjust_refcount(target, 1)?;
                sub.deployment = Some(target);
                sub.status = SubscriptionStatus::Active;
                self.subscriptions.push(sub.clone());
                Ok(SubscriptionOutcome {
                    subscription: sub,
                    deployed: deployed.map(|_| edge.deployment(target).cloned().expect("created")),
                    torn_down: None,
                })
            }
            SubscriptionAction::Unsubscribe => {
                let idx = existing.ok_or_else(|| RicError::UnknownSubscription {
                    service,
                    subscriber: request.subscriber.clone(),
                })?;
                let sub = &mut self.subscriptions[idx];
                sub.status = SubscriptionStatus::Terminated;
                let mut torn_down = None;
                if let Some(dep) = sub.deployment {
                    if edge.adjust_refcount(dep, -1)? == 0 {
                        torn_down = Some(edge.teardown(dep)?);
                    }
                }
                Ok(SubscriptionOutcome {
                    subscription: sub.clone(),
                    deployed: None,
                    torn_down,
                })
            }
        }
    }
}

/// A UE's serving cell and per-cell RSRP as seen by the load balancer.
#[derive(Clone, Debug, PartialEq)]
pub struct UeMeasurement {
    pub serving: CellId,
    pub rsrp: BTreeMap<CellId, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadBalanceParams {
    pub threshold: f64,
    pub margin_db: f64,
}

impl Default for LoadBalanceParams {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            margin_db: 6.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoverCommand {
    pub ue: UeId,
    pub source: CellId,
    pub target: CellId,
}

/// One greedy rebalancing move.
///
/// When the spread between the most and least loaded cells exceeds the
/// threshold, the UE served by the most loaded cell that hears the least
/// loaded cell best is moved there, provided that RSRP is within the margin
/// of its serving RSRP. Ties resolve to the lowest cell or UE id.
pub fn load_balance_step(
    cell_loads: &BTreeMap<CellId, f64>,
    measurements: &BTreeMap<UeId, UeMeasurement>,
    params: &LoadBalanceParams,
) -> Vec<HandoverCommand> {
    if cell_loads.len() < 2 {
        return Vec::new();
    }
    let mut most = None::<(CellId, f64)>;
    let mut least = None::<(CellId, f64)>;
    for (&cell, &load) in cell_loads {
        if most.is_none_or(|(_, l)| load > l) {
            most = Some((cell, load));
        }
        if least.is_none_or(|(_, l)| load < l) {
            least = Some((cell, load));
        }
    }
    let (Some((hot, hot_load)), Some((cold, cold_load))) = (most, least) else {
        return Vec::new();
    };
    if hot_load - cold_load <= params.threshold {
        return Vec::new();
    }

    let mut best: Option<(UeId, f64)> = None;
    for (&ue, m) in measurements {
        if m.serving != hot {
            continue;
        }
        let (Some(&serving_rsrp), Some(&target_rsrp)) = (m.rsrp.get(&hot), m.rsrp.get(&cold))
        else {
            continue;
        };
        if target_rsrp < serving_rsrp - params.margin_db {
            continue;
        }
        if best.is_none_or(|(_, r)| target_rsrp > r) {
            best = Some((ue, target_rsrp));
        }
    }
    best.map(|(ue, _)| {
        vec![HandoverCommand {
            ue,
            source: hot,
            target: cold,
        }]
    })
    .unwrap_or_default()
}

/// Rebalances cell load once per tick.
pub struct LoadBalancerXApp {
    pub params: LoadBalanceParams,
}

impl XApp for LoadBalancerXApp {
    fn on_event(
        &mut self,
        event: &NetworkEvent,
        world: &World,
    ) -> Result<Vec<ControlPayload>, XAppError> {
        if event.kind() != EventKind::TickCompleted {
            return Ok(Vec::new());
        }
        let loads = world.cells().map(|c| (c.id, c.load)).collect();
        let measurements = world
            .ues()
            .map(|ue| {
                (
                    ue.id,
                    UeMeasurement {
                        serving: ue.serving_cell,
                        rsrp: ue.measurement.iter().map(|(&c, r)| (c, r.rsrp)).collect(),
                    },
                )
            })
            .collect();
        Ok(load_balance_step(&loads, &measurements, &self.params)
            .into_iter()
            .map(|cmd| ControlPayload::HandoverCommand {
                ue: cmd.ue,
                target: cmd.target,
            })
            .collect())
    }
}

/// Counts delivered events per kind; never acts.
#[derive(Default)]
pub struct EventCounterXApp {
    pub counts: BTreeMap<EventKind, u64>,
}

impl XApp for EventCounterXApp {
    fn on_event(
        &mut self,
        event: &NetworkEvent,
        _world: &World,
    ) -> Result<Vec<ControlPayload>, XAppError> {
        *self.counts.entry(event.kind()).or_default() += 1;
        Ok(Vec::new())
    }
}

/// xApp manifest file: `{id, name, subscriptions[], params{}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XAppManifest {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub subscriptions: Vec<EventKind>,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// Builds the built-in xApp a manifest names.
pub fn instantiate_xapp(
    manifest: &XAppManifest,
) -> Result<(XAppDescriptor, Box<dyn XApp>), RicError> {
    let descriptor = XAppDescriptor::new(&manifest.id, &manifest.name, &manifest.subscriptions);
    let num = |key: &str, default: f64| -> Result<f64, RicError> {
        match manifest.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| RicError::Manifest(format!("{}: param {key} must be a number", manifest.id))),
        }
    };
    let app: Box<dyn XApp> = match manifest.name.as_str() {
        "load-balancer" => {
            let defaults = LoadBalanceParams::default();
            Box::new(LoadBalancerXApp {
                params: LoadBalanceParams {
                    threshold: num("threshold", defaults.threshold)?,
                    margin_db: num("margin_db", defaults.margin_db)?,
                },
            })
        }
        "event-counter" => Box::new(EventCounterXApp::default()),
        other => return Err(RicError::UnknownXAppKind(other.to_string())),
    };
    Ok((descriptor, app))
}

/// Reads every `*.json` manifest in `dir`, ordered by file name.
pub fn load_manifest_dir(dir: &Path) -> Result<Vec<XAppManifest>, RicError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| RicError::Manifest(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)
                .map_err(|e| RicError::Manifest(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| RicError::Manifest(format!("{}: {e}", p.display())))
        })
        .collect()
}
