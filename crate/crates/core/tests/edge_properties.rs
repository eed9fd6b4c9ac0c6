use std::cmp::Ordering;
use std::collections::BTreeMap;

use airan_core::edge::{
    place_service, profile_requirements, AiServiceSpec, DeploymentState, EdgeError, EdgeManager,
    EdgeServerConfig, LatencyClass, Modality, UserRequirement,
};
use airan_core::{BsId, DeploymentId, ServerId, ServiceId};
use proptest::prelude::*;

const MODALITIES: [Modality; 3] = [Modality::Vision, Modality::Nlp, Modality::Predictive];
const CLASSES: [LatencyClass; 3] = [LatencyClass::Realtime, LatencyClass::Interactive, LatencyClass::Batch];

fn spec(id: u32, cpu_milli: u32, gpu: u32, mem: u32, m: usize, l: usize, tier: u8) -> AiServiceSpec {
    AiServiceSpec {
        id: ServiceId(id),
        name: format!("svc-{id}"),
        modality: MODALITIES[m],
        image_ref: format!("img/{id}"),
        cpu_req: f64::from(cpu_milli) / 1000.0,
        gpu_req: gpu,
        mem_req: mem,
        latency_class: CLASSES[l],
        accuracy_tier: tier,
    }
}

fn arb_spec(id: u32) -> impl Strategy<Value = AiServiceSpec> {
    (250u32..6000, 1u32..4, 256u32..16384, 0usize..3, 0usize..3, 1u8..=5)
        .prop_map(move |(c, g, m, md, l, t)| spec(id, c, g, m, md, l, t))
}

fn arb_server(id: u32) -> impl Strategy<Value = EdgeServerConfig> {
    (1u32..32, 0u32..8, 1024u32..65536).prop_map(move |(cpu, gpu, mem)| EdgeServerConfig {
        id: ServerId(id),
        base_station: BsId(id),
        cpu_capacity: f64::from(cpu),
        gpu_capacity: gpu,
        mem_capacity: mem,
    })
}

/// Exact rational a/b.
#[derive(Clone, Copy)]
struct Frac(u128, u128);

impl Frac {
    fn cmp(self, o: Frac) -> Ordering {
        (self.0 * o.1).cmp(&(o.0 * self.1))
    }
}

/// Exhaustive placement: every server, exact post-placement max utilization.
fn placement_oracle(
    used: &BTreeMap<ServerId, [u128; 3]>,
    caps: &BTreeMap<ServerId, [u128; 3]>,
    req: [u128; 3],
) -> Option<ServerId> {
    let mut best: Option<(Frac, ServerId)> = None;
    for (id, cap) in caps {
        let u = used[id];
        if (0..3).any(|i| u[i] + req[i] > cap[i]) {
            continue;
        }
        let worst = (0..3)
            .filter(|&i| cap[i] > 0)
            .map(|i| Frac(u[i] + req[i], cap[i]))
            .max_by(|a, b| a.cmp(*b))
            .unwrap_or(Frac(0, 1));
        if best.is_none_or(|(b, _)| worst.cmp(b) == Ordering::Less) {
            best = Some((worst, *id));
        }
    }
    best.map(|(_, id)| id)
}

fn req_axes(s: &AiServiceSpec) -> [u128; 3] {
    [(s.cpu_req * 1000.0).round() as u128, s.gpu_req as u128, s.mem_req as u128]
}

proptest! {
    #[test]
    fn sequential_placement_matches_exhaustive_search(
        servers in (1usize..=5).prop_flat_map(|n| (1..=n as u32).map(arb_server).collect::<Vec<_>>()),
        services in (1usize..=6).prop_flat_map(|n| (1..=n as u32).map(arb_spec).collect::<Vec<_>>()),
    ) {
        let mut mgr = EdgeManager::new(services.clone(), &servers, 0).unwrap();
        let caps: BTreeMap<ServerId, [u128; 3]> = servers
            .iter()
            .map(|s| (s.id, [s.cpu_capacity as u128 * 1000, s.gpu_capacity as u128, s.mem_capacity as u128]))
            .collect();
        let mut used: BTreeMap<ServerId, [u128; 3]> = caps.keys().map(|&k| (k, [0; 3])).collect();
        for s in &services {
            let expected = placement_oracle(&used, &caps, req_axes(s));
            match mgr.place_and_deploy(s.id) {
                Ok(d) => {
                    prop_assert_eq!(Some(d.server_id), expected);
                    let u = used.get_mut(&d.server_id).unwrap();
                    for (i, r) in req_axes(s).iter().enumerate() {
                        u[i] += r;
                    }
                }
                Err(EdgeError::InsufficientCapacity(_)) => prop_assert_eq!(expected, None),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
            mgr.check_ledger().unwrap();
        }
    }

    #[test]
    fn profiling_is_sound_and_ordered(
        catalog in (1usize..10).prop_flat_map(|n| (1..=n as u32).map(arb_spec).collect::<Vec<_>>()),
        m in 0usize..3,
        l in 0usize..3,
        tier in 1u8..=5,
    ) {
        let req = UserRequirement {
            description: String::new(),
            modality: MODALITIES[m],
            max_latency_class: CLASSES[l],
            min_accuracy_tier: tier,
        };
        let feasible: Vec<&AiServiceSpec> = catalog
            .iter()
            .filter(|s| s.modality == req.modality && s.latency_class <= req.max_latency_class && s.accuracy_tier >= tier)
            .collect();
        match profile_requirements(&req, &catalog) {
            Err(EdgeError::NoMatchingService) => prop_assert!(feasible.is_empty()),
            Err(e) => prop_assert!(false, "unexpected {e}"),
            Ok(ranked) => {
                prop_assert_eq!(ranked.len(), feasible.len());
                let max = |f: fn(&AiServiceSpec) -> f64| catalog.iter().map(f).fold(0.0, f64::max);
                let (mc, mg, mm) = (max(|s| s.cpu_req), max(|s| s.gpu_req as f64), max(|s| s.mem_req as f64));
                let fp = |s: &AiServiceSpec| s.cpu_req / mc + s.gpu_req as f64 / mg + s.mem_req as f64 / mm;
                for pair in ranked.windows(2) {
                    let (a, b) = (&pair[0], &pair[1]);
                    let ok = a.accuracy_tier > b.accuracy_tier
                        || (a.accuracy_tier == b.accuracy_tier
                            && (fp(a) < fp(b) || (fp(a) == fp(b) && a.id < b.id)));
                    prop_assert!(ok, "{:?} before {:?}", a.id, b.id);
                }
            }
        }
    }

    #[test]
    fn ledger_and_lifecycle_hold_under_random_ops(
        ops in prop::collection::vec((0u8..3, 1u32..5), 1..60),
        delay in 0u32..4,
    ) {
        let catalog: Vec<_> = (1..=4).map(|i| spec(i, 1000 * i, 1, 1024 * i, 0, 0, 3)).collect();
        let servers: Vec<_> = (1..=3)
            .map(|i| EdgeServerConfig { id: ServerId(i), base_station: BsId(i), cpu_capacity: 8.0, gpu_capacity: 3, mem_capacity: 8192 })
            .collect();
        let mut mgr = EdgeManager::new(catalog, &servers, delay).unwrap();
        let mut seen: BTreeMap<DeploymentId, DeploymentState> = BTreeMap::new();
        for (op, arg) in ops {
            match op {
                0 => { let _ = mgr.place_and_deploy(ServiceId(arg)); }
                1 => { let _ = mgr.teardown(DeploymentId(arg)); }
                _ => { mgr.advance_tick(); }
            }
            mgr.check_ledger().unwrap();
            for d in mgr.deployments() {
                if let Some(prev) = seen.insert(d.id, d.state) {
                    prop_assert!(prev <= d.state, "{:?} went {:?} -> {:?}", d.id, prev, d.state);
                }
            }
        }
    }
}

#[test]
fn empty_server_list_is_an_error() {
    let s = spec(1, 1000, 1, 1024, 0, 0, 3);
    assert!(place_service(&s, std::iter::empty()).is_err());
}
