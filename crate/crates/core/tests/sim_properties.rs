use std::collections::BTreeMap;

use airan_core::sim::{
    allocate_prbs, compute_rsrp, compute_sinr, EventKind, EventPayload, PathlossModel, SimConfig,
    UeConfig, Vec2, World,
};
use airan_core::{CellId, UeId};
use proptest::prelude::*;

fn sinr_oracle(serving: f64, interferers: &[f64], noise: f64) -> f64 {
    let lin = |dbm: f64| (dbm * std::f64::consts::LN_10 / 10.0).exp();
    let denom = interferers.iter().fold(lin(noise), |acc, &i| acc + lin(i));
    10.0 * (lin(serving) / denom).ln() / std::f64::consts::LN_10
}

/// Exact-rational largest remainder over (demand * capacity) / total.
fn prb_oracle(capacity: u32, demands: &[(u32, u32)]) -> BTreeMap<UeId, u32> {
    let total: u128 = demands.iter().map(|&(_, d)| d as u128).sum();
    if total <= capacity as u128 {
        return demands.iter().map(|&(u, d)| (UeId(u), d)).collect();
    }
    let mut rows: Vec<(u32, u128, u128)> = demands
        .iter()
        .map(|&(u, d)| {
            let num = d as u128 * capacity as u128;
            (u, num / total, num % total)
        })
        .collect();
    let given: u128 = rows.iter().map(|r| r.1).sum();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].2.cmp(&rows[a].2).then(rows[a].0.cmp(&rows[b].0)));
    for &i in order.iter().take((capacity as u128 - given) as usize) {
        rows[i].1 += 1;
    }
    rows.into_iter().map(|(u, s, _)| (UeId(u), s as u32)).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

proptest! {
    #[test]
    fn rsrp_is_monotone_in_distance(
        tx in -10.0f64..60.0,
        n in 1.5f64..5.0,
        cx in -500.0f64..500.0,
        cy in -500.0f64..500.0,
        angle in 0.0f64..std::f64::consts::TAU,
        d1 in 0.0f64..2000.0,
        extra in 0.0f64..2000.0,
    ) {
        let model = PathlossModel { n, ..PathlossModel::default() };
        let cell = Vec2::new(cx, cy);
        let at = |d: f64| Vec2::new(cx + d * angle.cos(), cy + d * angle.sin());
        let near = compute_rsrp(tx, cell, at(d1), &model);
        let far = compute_rsrp(tx, cell, at(d1 + extra), &model);
        prop_assert!(near >= far - 1e-9, "{near} < {far}");
    }

    #[test]
    fn sinr_matches_linear_oracle_and_bound(
        serving in -130.0f64..-30.0,
        interferers in prop::collection::vec(-140.0f64..-30.0, 0..6),
        noise in -130.0f64..-80.0,
    ) {
        let got = compute_sinr(serving, &interferers, noise);
        prop_assert!(close(got, sinr_oracle(serving, &interferers, noise)));
        prop_assert!(got <= serving - noise + 1e-9);
    }

    #[test]
    fn prb_allocation_matches_oracle(
        capacity in 1u32..300,
        demands in prop::collection::vec(0u32..80, 0..12),
    ) {
        let rows: Vec<(u32, u32)> = demands.iter().enumerate().map(|(i, &d)| (i as u32 + 1, d)).collect();
        let map: BTreeMap<UeId, u32> = rows.iter().map(|&(u, d)| (UeId(u), d)).collect();
        let got = allocate_prbs(capacity, &map);
        prop_assert_eq!(&got, &prb_oracle(capacity, &rows));
        let total: u32 = demands.iter().sum();
        prop_assert_eq!(got.values().sum::<u32>(), total.min(capacity));
        for (ue, a) in &got {
            prop_assert!(*a <= map[ue]);
        }
    }

    #[test]
    fn identical_seeds_give_identical_streams(seed in 0u64..1000, ues in 1u32..30) {
        let cfg = SimConfig { seed, ue_count: ues, ..SimConfig::default() };
        let mut a = World::from_config(&cfg).unwrap();
        let mut b = World::from_config(&cfg).unwrap();
        for _ in 0..30 {
            let ra = serde_json::to_string(&a.step()).unwrap();
            let rb = serde_json::to_string(&b.step()).unwrap();
            prop_assert_eq!(ra, rb);
        }
    }
}

#[test]
fn prb_conservation_and_handover_sanity_over_1000_ticks() {
    let cfg = SimConfig {
        ue_count: 40,
        velocity_range: [1.0, 8.0],
        traffic_range: [4, 20],
        ..SimConfig::default()
    };
    let mut world = World::from_config(&cfg).unwrap();
    let ttt = u64::from(cfg.handover.ttt_ticks);
    let mut last_ho: BTreeMap<UeId, u64> = BTreeMap::new();
    let mut serving: BTreeMap<UeId, CellId> =
        world.ues().map(|u| (u.id, u.serving_cell)).collect();
    let mut version = world.state_version();
    for _ in 0..1000 {
        let report = world.step();
        assert!(report.state_version > version);
        version = report.state_version;
        for cell in world.cells() {
            let served: u32 = world
                .ues()
                .filter(|u| u.serving_cell == cell.id)
                .map(|u| u.allocated_prbs)
                .sum();
            assert!(served <= cell.prb_capacity);
            assert_eq!(served, cell.allocated_prbs);
        }
        for ue in world.ues() {
            assert!(ue.allocated_prbs <= ue.traffic_demand);
        }
        for ev in &report.events {
            if let EventPayload::HandoverExecuted { ue, source, target, .. } = ev.payload {
                assert_eq!(serving[&ue], source);
                serving.insert(ue, target);
                if let Some(prev) = last_ho.insert(ue, ev.tick) {
                    assert!(ev.tick - prev >= ttt, "ue {ue} ping-pong");
                }
            }
        }
        for ue in world.ues() {
            assert_eq!(serving[&ue.id], ue.serving_cell, "serving changed without an event");
        }
        world.check_invariants().unwrap();
    }
    assert!(!last_ho.is_empty(), "scenario should exercise handovers");
}

#[test]
fn events_are_emitted_in_canonical_order() {
    let mut world = World::from_config(&SimConfig {
        ue_count: 30,
        velocity_range: [2.0, 10.0],
        ..SimConfig::default()
    })
    .unwrap();
    for _ in 0..200 {
        let report = world.step();
        let last = report.events.last().unwrap();
        assert_eq!(last.kind(), EventKind::TickCompleted);
        let ues: Vec<u32> = report
            .events
            .iter()
            .filter_map(|e| match e.payload {
                EventPayload::HandoverExecuted { ue, .. } => Some(ue.0),
                _ => None,
            })
            .collect();
        assert!(ues.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn two_cell_crossing_single_handover() {
    let cfg = SimConfig {
        arena: airan_core::sim::Arena { width: 1000.0, height: 200.0 },
        cells: vec![
            airan_core::sim::CellConfig {
                id: CellId(1),
                base_station: airan_core::BsId(1),
                position: Vec2::new(200.0, 100.0),
                tx_power_dbm: 43.0,
                prb_capacity: 100,
            },
            airan_core::sim::CellConfig {
                id: CellId(2),
                base_station: airan_core::BsId(2),
                position: Vec2::new(800.0, 100.0),
                tx_power_dbm: 43.0,
                prb_capacity: 100,
            },
        ],
        ues: vec![UeConfig {
            id: UeId(1),
            position: Vec2::new(250.0, 100.0),
            velocity: Vec2::new(5.0, 0.0),
            traffic_demand: 5,
            slice: None,
        }],
        ue_count: 0,
        ..SimConfig::default()
    };
    let mut world = World::from_config(&cfg).unwrap();
    let handovers: usize = (0..100)
        .map(|_| {
            world
                .step()
                .events
                .iter()
                .filter(|e| e.kind() == EventKind::HandoverExecuted)
                .count()
        })
        .sum();
    assert_eq!(handovers, 1);
    assert_eq!(world.ue(UeId(1)).unwrap().serving_cell, CellId(2));
}
