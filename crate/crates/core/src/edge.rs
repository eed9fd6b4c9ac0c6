//! Edge AI services: catalog, requirement profiling, min-max placement and a
//! capacity-ledgered deployment lifecycle.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BsId, DeploymentId, ServerId, ServiceId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vision,
    Nlp,
    Predictive,
}

/// Ordered from most to least latency-sensitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyClass {
    Realtime,
    Interactive,
    Batch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AiServiceSpec {
    pub id: ServiceId,
    #[serde(default)]
    pub name: String,
    pub modality: Modality,
    /// Opaque container image reference.
    pub image_ref: String,
    /// Cores.
    pub cpu_req: f64,
    pub gpu_req: u32,
    /// MB.
    pub mem_req: u32,
    pub latency_class: LatencyClass,
    pub accuracy_tier: u8,
}

impl AiServiceSpec {
    pub fn validate(&self) -> Result<(), EdgeError> {
        let bad = |why: &str| EdgeError::InvalidSpec {
            service: self.id,
            reason: why.to_string(),
        };
        if !(self.cpu_req.is_finite() && self.cpu_req > 0.0) {
            return Err(bad("cpu_req must be positive"));
        }
        if self.gpu_req == 0 || self.mem_req == 0 {
            return Err(bad("gpu_req and mem_req must be positive"));
        }
        if !(1..=5).contains(&self.accuracy_tier) {
            return Err(bad("accuracy_tier must be within 1..=5"));
        }
        Ok(())
    }

    pub fn request(&self) -> Resources {
        Resources {
            cpu_milli: cores_to_milli(self.cpu_req),
            gpu: u64::from(self.gpu_req),
            mem_mb: u64::from(self.mem_req),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserRequirement {
    #[serde(default)]
    pub description: String,
    pub modality: Modality,
    pub max_latency_class: LatencyClass,
    pub min_accuracy_tier: u8,
}

/// Resource vector in integral units so the ledger balances exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resources {
    pub cpu_milli: u64,
    pub gpu: u64,
    pub mem_mb: u64,
}

impl Resources {
    fn axes(self) -> [u64; 3] {
        [self.cpu_milli, self.gpu, self.mem_mb]
    }

    pub fn fits_within(self, free: Resources) -> bool {
        self.axes().iter().zip(free.axes()).all(|(r, f)| *r <= f)
    }

    pub fn checked_sub(self, other: Resources) -> Option<Resources> {
        Some(Resources {
            cpu_milli: self.cpu_milli.checked_sub(other.cpu_milli)?,
            gpu: self.gpu.checked_sub(other.gpu)?,
            mem_mb: self.mem_mb.checked_sub(other.mem_mb)?,
        })
    }

    pub fn plus(self, other: Resources) -> Resources {
        Resources {
            cpu_milli: self.cpu_milli + other.cpu_milli,
            gpu: self.gpu + other.gpu,
            mem_mb: self.mem_mb + other.mem_mb,
        }
    }
}

fn cores_to_milli(cores: f64) -> u64 {
    (cores * 1000.0).round().max(0.0) as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeServerConfig {
    pub id: ServerId,
    pub base_station: BsId,
    pub cpu_capacity: f64,
    pub gpu_capacity: u32,
    pub mem_capacity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeServer {
    pub id: ServerId,
    pub base_station: BsId,
    pub cpu_capacity: f64,
    pub gpu_capacity: u32,
    pub mem_capacity: u32,
    pub free: Resources,
    pub deployments: BTreeSet<DeploymentId>,
}

impl EdgeServer {
    pub fn new(config: &EdgeServerConfig) -> Self {
        let mut server = EdgeServer {
            id: config.id,
            base_station: config.base_station,
            cpu_capacity: config.cpu_capacity,
            gpu_capacity: config.gpu_capacity,
            mem_capacity: config.mem_capacity,
            free: Resources::default(),
            deployments: BTreeSet::new(),
        };
        server.free = server.capacity();
        server
    }

    pub fn capacity(&self) -> Resources {
        Resources {
            cpu_milli: cores_to_milli(self.cpu_capacity),
            gpu: u64::from(self.gpu_capacity),
            mem_mb: u64::from(self.mem_capacity),
        }
    }

    pub fn used(&self) -> Resources {
        self.capacity()
            .checked_sub(self.free)
            .expect("free never exceeds capacity")
    }

    /// Per-axis utilization in `[0, 1]`; axes with zero capacity report 0.
    pub fn utilization(&self) -> [f64; 3] {
        let cap = self.capacity().axes();
        let used = self.used().axes();
        std::array::from_fn(|i| {
            if cap[i] == 0 {
                0.0
            } else {
                used[i] as f64 / cap[i] as f64
            }
        })
    }

    /// Highest per-axis utilization if `request` were added, or `None` when it
    /// does not fit.
    pub fn max_utilization_after(&self, request: Resources) -> Option<f64> {
        if !request.fits_within(self.free) {
            return None;
        }
        let cap = self.capacity().axes();
        let after = self.used().plus(request).axes();
        let mut worst = 0.0f64;
        for i in 0..3 {
            if cap[i] > 0 {
                worst = worst.max(after[i] as f64 / cap[i] as f64);
            }
        }
        Some(worst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeploymentState {
    Pending,
    Pulling,
    Running,
    Terminated,
}

impl DeploymentState {
    pub fn as_str(self) -> &'static str {
        match self {
            DeploymentState::Pending => "Pending",
            DeploymentState::Pulling => "Pulling",
            DeploymentState::Running => "Running",
            DeploymentState::Terminated => "Terminated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub id: DeploymentId,
    pub service_id: ServiceId,
    pub server_id: ServerId,
    pub state: DeploymentState,
    pub refcount: u32,
    pub pull_ticks_remaining: u32,
    pub request: Resources,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdgeError {
    #[error("no catalog service satisfies the requirement")]
    NoMatchingService,
    #[error("no edge server has capacity for service {0}")]
    InsufficientCapacity(ServiceId),
    #[error("unknown service {0}")]
    UnknownService(ServiceId),
    #[error("unknown edge server {0}")]
    UnknownServer(ServerId),
    #[error("unknown deployment {0}")]
    UnknownDeployment(DeploymentId),
    #[error("deployment {id} still has {refcount} subscribers")]
    DeploymentBusy { id: DeploymentId, refcount: u32 },
    #[error("deployment {0} is already terminated")]
    AlreadyTerminated(DeploymentId),
    #[error("invalid service {service}: {reason}")]
    InvalidSpec { service: ServiceId, reason: String },
    #[error("empty {0}")]
    Empty(&'static str),
}

/// Ranks catalog services against a requirement.
///
/// Hard filters: modality equal, latency class no slower than the maximum,
/// accuracy tier at least the minimum. Survivors are ordered by accuracy tier
/// descending, then normalized resource request ascending (each axis divided
/// by the catalog-wide maximum on that axis), then id.
pub fn profile_requirements(
    req: &UserRequirement,
    catalog: &[AiServiceSpec],
) -> Result<Vec<AiServiceSpec>, EdgeError> {
    if catalog.is_empty() {
        return Err(EdgeError::Empty("catalog"));
    }
    let max_cpu = catalog.iter().map(|s| s.cpu_req).fold(0.0, f64::max);
    let max_gpu = catalog.iter().map(|s| s.gpu_req).max().unwrap_or(1).max(1);
    let max_mem = catalog.iter().map(|s| s.mem_req).max().unwrap_or(1).max(1);
    let footprint = |s: &AiServiceSpec| {
        s.cpu_req / max_cpu + f64::from(s.gpu_req) / f64::from(max_gpu)
            + f64::from(s.mem_req) / f64::from(max_mem)
    };

    let mut survivors: Vec<AiServiceSpec> = catalog
        .iter()
        .filter(|s| {
            s.modality == req.modality
                && s.latency_class <= req.max_latency_class
                && s.accuracy_tier >= req.min_accuracy_tier
        })
        .cloned()
        .collect();
    if survivors.is_empty() {
        return Err(EdgeError::NoMatchingService);
    }
    survivors.sort_by(|a, b| {
        b.accuracy_tier
            .cmp(&a.accuracy_tier)
            .then_with(|| footprint(a).partial_cmp(&footprint(b)).unwrap_or(Ordering::Equal))
            .then(a.id.cmp(&b.id))
    });
    Ok(survivors)
}

/// Picks the server whose post-placement maximum axis utilization is lowest,
/// ties broken by ascending server id.
pub fn place_service<'a, I>(spec: &AiServiceSpec, servers: I) -> Result<ServerId, EdgeError>
where
    I: IntoIterator<Item = &'a EdgeServer>,
{
    let request = spec.request();
    let mut best: Option<(f64, ServerId)> = None;
    let mut any = false;
    for server in servers {
        any = true;
        if let Some(u) = server.max_utilization_after(request) {
            let better = match best {
                None => true,
                Some((bu, bid)) => u < bu || (u == bu && server.id < bid),
            };
            if better {
                best = Some((u, server.id));
            }
        }
    }
    if !any {
        return Err(EdgeError::Empty("server list"));
    }
    best.map(|(_, id)| id)
        .ok_or(EdgeError::InsufficientCapacity(spec.id))
}

/// A state change produced by [`EdgeManager::advance_tick`].
#[derive(Clone, Debug, PartialEq)]
pub struct DeploymentTransition {
    pub deployment: DeploymentId,
    pub service: ServiceId,
    pub state: DeploymentState,
}

/// Catalog, servers and the deployment ledger.
#[derive(Clone, Debug)]
pub struct EdgeManager {
    catalog: BTreeMap<ServiceId, AiServiceSpec>,
    servers: BTreeMap<ServerId, EdgeServer>,
    deployments: BTreeMap<DeploymentId, Deployment>,
    next_deployment: u32,
    pull_delay_ticks: u32,
}

impl EdgeManager {
    pub fn new(
        catalog: Vec<AiServiceSpec>,
        servers: &[EdgeServerConfig],
        pull_delay_ticks: u32,
    ) -> Result<Self, EdgeError> {
        let mut cat = BTreeMap::new();
        for spec in catalog {
            spec.validate()?;
            cat.insert(spec.id, spec);
        }
        Ok(EdgeManager {
            catalog: cat,
            servers: servers.iter().map(|c| (c.id, EdgeServer::new(c))).collect(),
            deployments: BTreeMap::new(),
            next_deployment: 1,
            pull_delay_ticks,
        })
    }

    pub fn catalog(&self) -> impl Iterator<Item = &AiServiceSpec> {
        self.catalog.values()
    }

    pub fn catalog_vec(&self) -> Vec<AiServiceSpec> {
        self.catalog.values().cloned().collect()
    }

    pub fn service(&self, id: ServiceId) -> Option<&AiServiceSpec> {
        self.catalog.get(&id)
    }

    pub fn servers(&self) -> impl Iterator<Item = &EdgeServer> {
        self.servers.values()
    }

    pub fn server(&self, id: ServerId) -> Option<&EdgeServer> {
        self.servers.get(&id)
    }

    pub fn deployments(&self) -> impl Iterator<Item = &Deployment> {
        self.deployments.values()
    }

    pub fn deployment(&self, id: DeploymentId) -> Option<&Deployment> {
        self.deployments.get(&id)
    }

    pub fn pull_delay_ticks(&self) -> u32 {
        self.pull_delay_ticks
    }

    pub fn profile(&self, req: &UserRequirement) -> Result<Vec<AiServiceSpec>, EdgeError> {
        profile_requirements(req, &self.catalog_vec())
    }

    pub fn place(&self, service: ServiceId) -> Result<ServerId, EdgeError> {
        let spec = self
            .catalog
            .get(&service)
            .ok_or(EdgeError::UnknownService(service))?;
        place_service(spec, self.servers.values())
    }

    /// Debits the server and creates a deployment. With a zero pull delay the
    /// deployment is Running immediately, otherwise it starts Pending.
    pub fn deploy_service(
        &mut self,
        service: ServiceId,
        server: ServerId,
    ) -> Result<Deployment, EdgeError> {
        let spec = self
            .catalog
            .get(&service)
            .ok_or(EdgeError::UnknownService(service))?;
        let request = spec.request();
        let srv = self
            .servers
            .get_mut(&server)
            .ok_or(EdgeError::UnknownServer(server))?;
        let free = srv
            .free
            .checked_sub(request)
            .ok_or(EdgeError::InsufficientCapacity(service))?;
        srv.free = free;

        let id = DeploymentId(self.next_deployment);
        self.next_deployment += 1;
        srv.deployments.insert(id);
        let state = if self.pull_delay_ticks == 0 {
            DeploymentState::Running
        } else {
            DeploymentState::Pending
        };
        let deployment = Deployment {
            id,
            service_id: service,
            server_id: server,
            state,
            refcount: 0,
            pull_ticks_remaining: self.pull_delay_ticks,
            request,
        };
        self.deployments.insert(id, deployment.clone());
        Ok(deployment)
    }

    pub fn place_and_deploy(&mut self, service: ServiceId) -> Result<Deployment, EdgeError> {
        let server = self.place(service)?;
        self.deploy_service(service, server)
    }

    pub fn teardown(&mut self, id: DeploymentId) -> Result<Deployment, EdgeError> {
        let dep = self
            .deployments
            .get_mut(&id)
            .ok_or(EdgeError::UnknownDeployment(id))?;
        if dep.state == DeploymentState::Terminated {
            return Err(EdgeError::AlreadyTerminated(id));
        }
        if dep.refcount > 0 {
            return Err(EdgeError::DeploymentBusy {
                id,
                refcount: dep.refcount,
            });
        }
        dep.state = DeploymentState::Terminated;
        let srv = self
            .servers
            .get_mut(&dep.server_id)
            .expect("deployment server exists");
        srv.free = srv.free.plus(dep.request);
        srv.deployments.remove(&id);
        Ok(dep.clone())
    }

    /// Progresses image pulls by one tick.
    pub fn advance_tick(&mut self) -> Vec<DeploymentTransition> {
        let mut out = Vec::new();
        for dep in self.deployments.values_mut() {
            if !matches!(
                dep.state,
                DeploymentState::Pending | DeploymentState::Pulling
            ) {
                continue;
            }
            dep.pull_ticks_remaining = dep.pull_ticks_remaining.saturating_sub(1);
            let next = if dep.pull_ticks_remaining == 0 {
                DeploymentState::Running
            } else {
                DeploymentState::Pulling
            };
            if next != dep.state {
                dep.state = next;
                out.push(DeploymentTransition {
                    deployment: dep.id,
                    service: dep.service_id,
                    state: next,
                });
            }
        }
        out
    }

    /// The lowest-id live deployment of a service; subscriptions attach here.
    pub fn primary_deployment(&self, service: ServiceId) -> Option<&Deployment> {
        self.deployments
            .values()
            .find(|d| d.service_id == service && d.state != DeploymentState::Terminated)
    }

    pub fn live_deployments(&self, service: ServiceId) -> impl Iterator<Item = &Deployment> {
        self.deployments
            .values()
            .filter(move |d| d.service_id == service && d.state != DeploymentState::Terminated)
    }

    pub(crate) fn adjust_refcount(
        &mut self,
        id: DeploymentId,
        delta: i32,
    ) -> Result<u32, EdgeError> {
        let dep = self
            .deployments
            .get_mut(&id)
            .ok_or(EdgeError::UnknownDeployment(id))?;
        dep.refcount = dep
            .refcount
            .checked_add_signed(delta)
            .expect("refcount never goes negative");
        Ok(dep.refcount)
    }

    /// Total refcount across a service's live deployments.
    pub fn service_refcount(&self, service: ServiceId) -> u32 {
        self.live_deployments(service).map(|d| d.refcount).sum()
    }

    /// free + requests of live deployments == capacity on every server and axis.
    pub fn check_ledger(&self) -> Result<(), String> {
        for server in self.servers.values() {
            let mut total = server.free;
            for dep in self.deployments.values() {
                if dep.server_id == server.id && dep.state != DeploymentState::Terminated {
                    total = total.plus(dep.request);
                }
            }
            if total != server.capacity() {
                return Err(format!(
                    "server {} ledger mismatch: {:?} != {:?}",
                    server.id,
                    total,
                    server.capacity()
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(id: u32, modality: Modality, tier: u8, gpu: u32) -> AiServiceSpec {
        AiServiceSpec {
            id: ServiceId(id),
            name: format!("svc-{id}"),
            modality,
            image_ref: format!("registry.local/svc-{id}:1"),
            cpu_req: 2.0,
            gpu_req: gpu,
            mem_req: 2048,
            latency_class: LatencyClass::Realtime,
            accuracy_tier: tier,
        }
    }

    fn server(id: u32, cpu: f64, gpu: u32, mem: u32) -> EdgeServerConfig {
        EdgeServerConfig {
            id: ServerId(id),
            base_station: BsId(1),
            cpu_capacity: cpu,
            gpu_capacity: gpu,
            mem_capacity: mem,
        }
    }

    fn vision_req(tier: u8) -> UserRequirement {
        UserRequirement {
            description: "camera analytics".into(),
            modality: Modality::Vision,
            max_latency_class: LatencyClass::Interactive,
            min_accuracy_tier: tier,
        }
    }

    #[test]
    fn profile_singleton() {
        let cat = vec![spec(1, Modality::Vision, 3, 1)];
        let ranked = profile_requirements(&vision_req(1), &cat).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].id, ServiceId(1));
    }

    #[test]
    fn profile_no_match() {
        let cat = vec![spec(1, Modality::Vision, 3, 1)];
        let mut req = vision_req(1);
        req.modality = Modality::Nlp;
        assert_eq!(
            profile_requirements(&req, &cat),
            Err(EdgeError::NoMatchingService)
        );
    }

    #[test]
    fn profile_higher_tier_first() {
        let cat = vec![spec(1, Modality::Vision, 3, 1), spec(2, Modality::Vision, 4, 2)];
        let ranked = profile_requirements(&vision_req(1), &cat).unwrap();
        assert_eq!(ranked[0].id, ServiceId(2));
    }

    #[test]
    fn profile_filters_latency_and_tier() {
        let mut slow = spec(3, Modality::Vision, 5, 1);
        slow.latency_class = LatencyClass::Batch;
        let cat = vec![spec(1, Modality::Vision, 2, 1), slow];
        assert_eq!(
            profile_requirements(&vision_req(3), &cat),
            Err(EdgeError::NoMatchingService)
        );
    }

    #[test]
    fn place_single_server() {
        let servers = [EdgeServer::new(&server(1, 8.0, 2, 8192))];
        assert_eq!(
            place_service(&spec(1, Modality::Vision, 3, 1), &servers),
            Ok(ServerId(1))
        );
    }

    #[test]
    fn place_exceeding_gpu_everywhere() {
        let servers = [
            EdgeServer::new(&server(1, 8.0, 2, 8192)),
            EdgeServer::new(&server(2, 8.0, 1, 8192)),
        ];
        assert_eq!(
            place_service(&spec(7, Modality::Vision, 3, 4), &servers),
            Err(EdgeError::InsufficientCapacity(ServiceId(7)))
        );
    }

    #[test]
    fn place_prefers_lower_post_utilization() {
        let servers = [
            EdgeServer::new(&server(1, 4.0, 2, 4096)),
            EdgeServer::new(&server(2, 16.0, 4, 16384)),
        ];
        assert_eq!(
            place_service(&spec(1, Modality::Vision, 3, 1), &servers),
            Ok(ServerId(2))
        );
    }

    fn manager(pull: u32) -> EdgeManager {
        EdgeManager::new(
            vec![spec(1, Modality::Vision, 3, 1), spec(2, Modality::Nlp, 4, 2)],
            &[server(1, 4.0, 2, 8192)],
            pull,
        )
        .unwrap()
    }

    #[test]
    fn deploy_runs_after_default_pull_delay() {
        let mut m = manager(2);
        let d = m.deploy_service(ServiceId(1), ServerId(1)).unwrap();
        assert_eq!(d.state, DeploymentState::Pending);
        let t1 = m.advance_tick();
        assert_eq!(t1[0].state, DeploymentState::Pulling);
        let t2 = m.advance_tick();
        assert_eq!(t2[0].state, DeploymentState::Running);
        assert!(m.advance_tick().is_empty());
    }

    #[test]
    fn deploy_zero_delay_runs_immediately() {
        let mut m = manager(0);
        let d = m.deploy_service(ServiceId(1), ServerId(1)).unwrap();
        assert_eq!(d.state, DeploymentState::Running);
    }

    #[test]
    fn second_deploy_over_capacity_rejected() {
        let mut m = manager(2);
        m.deploy_service(ServiceId(2), ServerId(1)).unwrap();
        assert_eq!(
            m.deploy_service(ServiceId(1), ServerId(1)),
            Err(EdgeError::InsufficientCapacity(ServiceId(1)))
        );
        m.check_ledger().unwrap();
    }

    #[test]
    fn teardown_restores_capacity() {
        let mut m = manager(2);
        let before = m.server(ServerId(1)).unwrap().free;
        let d = m.deploy_service(ServiceId(1), ServerId(1)).unwrap();
        let t = m.teardown(d.id).unwrap();
        assert_eq!(t.state, DeploymentState::Terminated);
        assert_eq!(m.server(ServerId(1)).unwrap().free, before);
        assert_eq!(m.teardown(d.id), Err(EdgeError::AlreadyTerminated(d.id)));
    }

    #[test]
    fn teardown_busy_and_unknown() {
        let mut m = manager(2);
        let d = m.deploy_service(ServiceId(1), ServerId(1)).unwrap();
        m.adjust_refcount(d.id, 1).unwrap();
        assert_eq!(
            m.teardown(d.id),
            Err(EdgeError::DeploymentBusy {
                id: d.id,
                refcount: 1
            })
        );
        assert_eq!(
            m.teardown(DeploymentId(99)),
            Err(EdgeError::UnknownDeployment(DeploymentId(99)))
        );
    }

    #[test]
    fn redeploy_after_teardown_places_identically() {
        let mut m = EdgeManager::new(
            vec![spec(1, Modality::Vision, 3, 1)],
            &[server(1, 4.0, 2, 8192), server(2, 8.0, 2, 8192)],
            2,
        )
        .unwrap();
        let first = m.place_and_deploy(ServiceId(1)).unwrap();
        m.teardown(first.id).unwrap();
        let second = m.place_and_deploy(ServiceId(1)).unwrap();
        assert_eq!(first.server_id, second.server_id);
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = spec(1, Modality::Vision, 3, 1);
        s.accuracy_tier = 9;
        assert!(EdgeManager::new(vec![s], &[], 2).is_err());
    }
}
