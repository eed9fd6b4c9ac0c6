use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use airan_core::edge::{AiServiceSpec, EdgeManager, EdgeServerConfig, LatencyClass, Modality};
use airan_core::ric::{
    load_balance_step, load_manifest_dir, ControlPayload, LoadBalanceParams, Ric, Subscriber,
    SubscriptionAction, SubscriptionRequest, UeMeasurement, XApp, XAppDescriptor, XAppError,
};
use airan_core::sim::{EventKind, NetworkEvent, SimConfig, World};
use airan_core::{BsId, CellId, ServerId, ServiceId, UeId};
use proptest::prelude::*;

struct Recorder {
    log: Arc<Mutex<Vec<(String, u64, EventKind)>>>,
    name: String,
}

impl XApp for Recorder {
    fn on_event(&mut self, e: &NetworkEvent, _: &World) -> Result<Vec<ControlPayload>, XAppError> {
        self.log.lock().unwrap().push((self.name.clone(), e.tick, e.kind()));
        Ok(vec![])
    }
}

#[test]
fn every_active_subscriber_sees_each_event_once() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let mut ric = Ric::new();
    let subs: [&[EventKind]; 3] = [
        &[EventKind::TickCompleted],
        &EventKind::ALL,
        &[EventKind::CellLoadChanged, EventKind::HandoverExecuted],
    ];
    for (i, kinds) in subs.iter().enumerate() {
        let name = format!("x{i}");
        ric.register_xapp(
            XAppDescriptor::new(&name, "rec", kinds),
            Box::new(Recorder { log: log.clone(), name }),
        )
        .unwrap();
    }
    let mut world = World::from_config(&SimConfig {
        ue_count: 30,
        velocity_range: [2.0, 9.0],
        ..SimConfig::default()
    })
    .unwrap();
    let mut expected = Vec::new();
    for _ in 0..100 {
        let report = world.step();
        for ev in &report.events {
            for (i, kinds) in subs.iter().enumerate() {
                if kinds.contains(&ev.kind()) {
                    expected.push((format!("x{i}"), ev.tick, ev.kind()));
                }
            }
            ric.dispatch_event(ev, &world);
        }
    }
    assert_eq!(*log.lock().unwrap(), expected);
}

proptest! {
    #[test]
    fn load_balancer_never_moves_ue_to_much_weaker_cell(
        loads in prop::collection::vec(0.0f64..1.0, 2..6),
        ues in prop::collection::vec((0usize..6, prop::collection::vec(-120.0f64..-60.0, 6)), 0..20),
    ) {
        let cell_loads: BTreeMap<CellId, f64> =
            loads.iter().enumerate().map(|(i, &l)| (CellId(i as u32 + 1), l)).collect();
        let n = loads.len();
        let meas: BTreeMap<UeId, UeMeasurement> = ues
            .iter()
            .enumerate()
            .map(|(i, (s, rs))| {
                (UeId(i as u32 + 1), UeMeasurement {
                    serving: CellId((s % n) as u32 + 1),
                    rsrp: (0..n).map(|c| (CellId(c as u32 + 1), rs[c])).collect(),
                })
            })
            .collect();
        let params = LoadBalanceParams::default();
        let cmds = load_balance_step(&cell_loads, &meas, &params);
        prop_assert!(cmds.len() <= 1);
        let max = loads.iter().cloned().fold(f64::MIN, f64::max);
        let min = loads.iter().cloned().fold(f64::MAX, f64::min);
        if max - min <= params.threshold {
            prop_assert!(cmds.is_empty());
        }
        for c in cmds {
            let m = &meas[&c.ue];
            prop_assert_eq!(m.serving, c.source);
            prop_assert!(m.rsrp[&c.target] >= m.rsrp[&c.source] - params.margin_db);
            prop_assert_eq!(cell_loads[&c.source], max);
            prop_assert_eq!(cell_loads[&c.target], min);
        }
    }

    #[test]
    fn subscription_count_equals_refcount(ops in prop::collection::vec((0u32..3, 0u32..5, any::<bool>()), 1..60)) {
        let catalog: Vec<AiServiceSpec> = (1..=3)
            .map(|i| AiServiceSpec {
                id: ServiceId(i),
                name: format!("s{i}"),
                modality: Modality::Vision,
                image_ref: "img".into(),
                cpu_req: 1.0,
                gpu_req: 1,
                mem_req: 512,
                latency_class: LatencyClass::Interactive,
                accuracy_tier: 3,
            })
            .collect();
        let mut edge = EdgeManager::new(
            catalog,
            &[EdgeServerConfig { id: ServerId(1), base_station: BsId(1), cpu_capacity: 16.0, gpu_capacity: 8, mem_capacity: 8192 }],
            2,
        )
        .unwrap();
        let mut ric = Ric::new();
        for (svc, who, sub) in ops {
            let req = SubscriptionRequest {
                service_id: ServiceId(svc + 1),
                subscriber: Subscriber::Ue(UeId(who)),
                action: if sub { SubscriptionAction::Subscribe } else { SubscriptionAction::Unsubscribe },
            };
            let _ = ric.manage_ai_subscription(&req, &mut edge);
            edge.advance_tick();
            for s in 1..=3 {
                prop_assert_eq!(ric.active_subscriptions(ServiceId(s)) as u32, edge.service_refcount(ServiceId(s)));
                if ric.active_subscriptions(ServiceId(s)) == 0 {
                    prop_assert!(edge.primary_deployment(ServiceId(s)).is_none());
                }
            }
            edge.check_ledger().unwrap();
        }
    }
}

#[test]
fn manifests_load_in_file_name_order() {
    let dir = std::env::temp_dir().join(format!("airan-manifests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("b.json"), r#"{"id":"second","name":"event-counter"}"#).unwrap();
    std::fs::write(dir.join("a.json"), r#"{"id":"first","name":"load-balancer","subscriptions":["TickCompleted"]}"#).unwrap();
    std::fs::write(dir.join("notes.txt"), "ignored").unwrap();
    let manifests = load_manifest_dir(&dir).unwrap();
    let ids: Vec<_> = manifests.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["first", "second"]);
    std::fs::remove_dir_all(dir).unwrap();
}
