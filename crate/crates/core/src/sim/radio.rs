//! Propagation, interference, handover and PRB scheduling primitives.
//!
//! These are pure functions over plain values so they can be checked against
//! closed forms and brute-force oracles independently of the [`World`](super::World).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{CellId, UeId};

/// A point or displacement in the arena, meters (or meters/second for velocities).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Log-distance pathloss: `L(d) = L0 + 10 n log10(max(d, d0) / d0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    /// Reference distance in meters.
    pub d0: f64,
    /// Loss at the reference distance, dB.
    #[serde(rename = "L0")]
    pub l0: f64,
    /// Pathloss exponent.
    pub n: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            d0: 1.0,
            l0: 32.45,
            n: 3.5,
        }
    }
}

impl PathlossModel {
    pub fn loss_db(&self, distance: f64) -> f64 {
        let d = distance.max(self.d0);
        self.l0 + 10.0 * self.n * (d / self.d0).log10()
    }
}

/// Received power in dBm from a transmitter at `tx_position` with power `tx_power_dbm`.
pub fn compute_rsrp(
    tx_power_dbm: f64,
    tx_position: Vec2,
    position: Vec2,
    model: &PathlossModel,
) -> f64 {
    tx_power_dbm - model.loss_db(tx_position.distance(position))
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// SINR in dB, summing interference and noise in the linear (mW) domain.
pub fn compute_sinr(serving_rsrp: f64, interferer_rsrps: &[f64], noise_floor: f64) -> f64 {
    let interference: f64 = interferer_rsrps.iter().map(|&i| dbm_to_mw(i)).sum();
    let denom = interference + dbm_to_mw(noise_floor);
    10.0 * (dbm_to_mw(serving_rsrp) / denom).log10()
}

/// Latest measurement of one cell as seen by one UE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    pub cell_id: CellId,
    pub rsrp: f64,
    pub sinr: f64,
    pub tick: u64,
}

/// A3 event parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandoverParams {
    pub hysteresis_db: f64,
    pub ttt_ticks: u32,
}

impl Default for HandoverParams {
    fn default() -> Self {
        Self {
            hysteresis_db: 3.0,
            ttt_ticks: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandoverDecision {
    pub target: CellId,
    pub target_rsrp: f64,
    pub serving_rsrp: f64,
}

/// A3-style handover check.
///
/// Every neighbor whose RSRP exceeds the serving RSRP by at least the
/// hysteresis has its timer incremented; every other neighbor's timer is
/// cleared. Among neighbors whose timer has reached `ttt_ticks`, the one with
/// the highest RSRP is returned (lowest cell id on ties).
pub fn check_handover(
    reports: &[SignalReport],
    serving: CellId,
    params: &HandoverParams,
    a3_timers: &mut BTreeMap<CellId, u32>,
) -> Option<HandoverDecision> {
    let serving_rsrp = match reports.iter().find(|r| r.cell_id == serving) {
        Some(r) => r.rsrp,
        None => {
            a3_timers.clear();
            return None;
        }
    };

    a3_timers.retain(|cell, _| reports.iter().any(|r| r.cell_id == *cell && *cell != serving));

    let mut best: Option<HandoverDecision> = None;
    for report in reports.iter().filter(|r| r.cell_id != serving) {
        if report.rsrp - serving_rsrp >= params.hysteresis_db {
            let timer = a3_timers.entry(report.cell_id).or_insert(0);
            *timer += 1;
            if *timer >= params.ttt_ticks {
                let better = match best {
                    None => true,
                    Some(b) => {
                        report.rsrp > b.target_rsrp
                            || (report.rsrp == b.target_rsrp && report.cell_id < b.target)
                    }
                };
                if better {
                    best = Some(HandoverDecision {
                        target: report.cell_id,
                        target_rsrp: report.rsrp,
                        serving_rsrp,
                    });
                }
            }
        } else {
            a3_timers.remove(&report.cell_id);
        }
    }
    best
}

/// Proportional-share PRB allocation with largest-remainder rounding.
///
/// Under-subscribed cells grant every demand in full. Otherwise each UE gets
/// `floor(capacity * demand / total)` and the leftover PRBs go one each to
/// the largest remainders, ties broken by ascending UE id.
pub fn allocate_prbs(capacity: u32, demands: &BTreeMap<UeId, u32>) -> BTreeMap<UeId, u32> {
    let total: u64 = demands.values().map(|&d| u64::from(d)).sum();
    if total <= u64::from(capacity) {
        return demands.clone();
    }

    let cap = u64::from(capacity);
    let mut alloc: BTreeMap<UeId, u32> = BTreeMap::new();
    let mut remainders: Vec<(u64, UeId)> = Vec::with_capacity(demands.len());
    let mut granted = 0u64;
    for (&ue, &demand) in demands {
        let scaled = cap * u64::from(demand);
        let share = scaled / total;
        granted += share;
        alloc.insert(ue, share as u32);
        remainders.push((scaled % total, ue));
    }

    // larger remainder first, then ascending UE id
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let leftover = (cap - granted) as usize;
    for &(_, ue) in remainders.iter().take(leftover) {
        *alloc.get_mut(&ue).expect("allocated above") += 1;
    }
    alloc
}

/// PRB bandwidth used for throughput estimates, MHz.
pub const PRB_BANDWIDTH_MHZ: f64 = 0.18;
/// Spectral efficiency ceiling, bit/s/Hz.
pub const MAX_SPECTRAL_EFFICIENCY: f64 = 6.0;

/// Shannon-bounded throughput estimate for `prbs` PRBs at `sinr_db`.
pub fn throughput_mbps(prbs: u32, sinr_db: f64) -> f64 {
    let efficiency = (1.0 + dbm_to_mw(sinr_db)).log2().min(MAX_SPECTRAL_EFFICIENCY);
    f64::from(prbs) * PRB_BANDWIDTH_MHZ * efficiency
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn rsrp_at_reference_distance() {
        let m = PathlossModel::default();
        let r = compute_rsrp(43.0, Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), &m);
        assert!(close(r, 10.55), "{r}");
    }

    #[test]
    fn rsrp_at_100m() {
        let m = PathlossModel::default();
        let r = compute_rsrp(43.0, Vec2::new(0.0, 0.0), Vec2::new(0.0, 100.0), &m);
        assert!(close(r, -59.45), "{r}");
    }

    #[test]
    fn rsrp_clamps_below_reference_distance() {
        let m = PathlossModel::default();
        let r = compute_rsrp(30.0, Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0), &m);
        assert!(close(r, -2.45), "{r}");
    }

    #[test]
    fn sinr_without_interference_is_snr() {
        assert!(close(compute_sinr(-90.0, &[], -104.0), 14.0));
    }

    #[test]
    fn sinr_equal_interferer_is_zero() {
        assert!(compute_sinr(-90.0, &[-90.0], -200.0).abs() < 1e-9);
    }

    #[test]
    fn sinr_two_interferers() {
        // 10^-8 / (10^-9 + 10^-9.3 + 10^-10.4) evaluated by hand
        let denom = 1e-9 + 10f64.powf(-9.3) + 10f64.powf(-10.4);
        let expected = 10.0 * (1e-8 / denom).log10();
        let got = compute_sinr(-80.0, &[-90.0, -93.0], -104.0);
        assert!(close(got, expected), "{got} vs {expected}");
        // frozen from the linear-domain sum
        assert!(close(got, 8.121979388337033), "{got}");
    }

    fn report(cell: u32, rsrp: f64) -> SignalReport {
        SignalReport {
            cell_id: CellId(cell),
            rsrp,
            sinr: 0.0,
            tick: 0,
        }
    }

    #[test]
    fn handover_below_hysteresis() {
        let params = HandoverParams::default();
        let mut timers = BTreeMap::new();
        for _ in 0..5 {
            let d = check_handover(
                &[report(1, -90.0), report(2, -88.0)],
                CellId(1),
                &params,
                &mut timers,
            );
            assert!(d.is_none());
        }
        assert!(timers.is_empty());
    }

    #[test]
    fn handover_after_time_to_trigger() {
        let params = HandoverParams::default();
        let mut timers = BTreeMap::new();
        let reports = [report(1, -90.0), report(2, -86.0)];
        assert!(check_handover(&reports, CellId(1), &params, &mut timers).is_none());
        assert!(check_handover(&reports, CellId(1), &params, &mut timers).is_none());
        assert_eq!(timers[&CellId(2)], 2);
        let d = check_handover(&reports, CellId(1), &params, &mut timers).unwrap();
        assert_eq!(d.target, CellId(2));
    }

    #[test]
    fn handover_timer_resets_when_condition_breaks() {
        let params = HandoverParams::default();
        let mut timers = BTreeMap::new();
        let good = [report(1, -90.0), report(2, -86.0)];
        let bad = [report(1, -90.0), report(2, -89.0)];
        check_handover(&good, CellId(1), &params, &mut timers);
        check_handover(&good, CellId(1), &params, &mut timers);
        check_handover(&bad, CellId(1), &params, &mut timers);
        assert!(!timers.contains_key(&CellId(2)));
        assert!(check_handover(&good, CellId(1), &params, &mut timers).is_none());
    }

    #[test]
    fn handover_picks_strongest_qualifying_neighbor() {
        let params = HandoverParams {
            hysteresis_db: 3.0,
            ttt_ticks: 1,
        };
        let mut timers = BTreeMap::new();
        let reports = [report(1, -90.0), report(2, -85.0), report(3, -80.0)];
        let d = check_handover(&reports, CellId(1), &params, &mut timers).unwrap();
        assert_eq!(d.target, CellId(3));
    }

    fn demands(pairs: &[(u32, u32)]) -> BTreeMap<UeId, u32> {
        pairs.iter().map(|&(u, d)| (UeId(u), d)).collect()
    }

    #[test]
    fn prb_exact_fit() {
        let a = allocate_prbs(20, &demands(&[(1, 10), (2, 10)]));
        assert_eq!(a, demands(&[(1, 10), (2, 10)]));
    }

    #[test]
    fn prb_under_subscribed() {
        let a = allocate_prbs(20, &demands(&[(1, 5), (2, 3)]));
        assert_eq!(a, demands(&[(1, 5), (2, 3)]));
    }

    #[test]
    fn prb_proportional_share() {
        let a = allocate_prbs(20, &demands(&[(1, 30), (2, 10)]));
        assert_eq!(a, demands(&[(1, 15), (2, 5)]));
    }

    #[test]
    fn prb_remainder_ties_go_to_lower_id() {
        // 10 * 1/3 each: floors 3,3,3 and one leftover for the lowest id
        let a = allocate_prbs(10, &demands(&[(5, 7), (2, 7), (9, 7)]));
        assert_eq!(a, demands(&[(2, 4), (5, 3), (9, 3)]));
    }

    #[test]
    fn throughput_caps_spectral_efficiency() {
        let hi = throughput_mbps(10, 60.0);
        assert!(close(hi, 10.0 * PRB_BANDWIDTH_MHZ * MAX_SPECTRAL_EFFICIENCY));
        assert_eq!(throughput_mbps(0, 20.0), 0.0);
    }
}
