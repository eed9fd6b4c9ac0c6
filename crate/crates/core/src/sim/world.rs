use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{Arena, SimConfig, UeConfig};
use super::event::{EventPayload, HandoverCause, NetworkEvent};
use super::radio::{
    allocate_prbs, check_handover, compute_rsrp, compute_sinr, throughput_mbps, HandoverParams,
    PathlossModel, SignalReport, Vec2,
};
use crate::ids::{BsId, CellId, ServerId, SliceId, UeId};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error("unknown UE {0}")]
    UnknownUe(UeId),
    #[error("unknown cell {0}")]
    UnknownCell(CellId),
    #[error("UE {0} already exists")]
    DuplicateUe(UeId),
    #[error("admission rejected for UE {ue}: unknown slice {slice}")]
    AdmissionRejected { ue: UeId, slice: SliceId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ue {
    pub id: UeId,
    pub position: Vec2,
    pub velocity: Vec2,
    pub serving_cell: CellId,
    pub traffic_demand: u32,
    pub slice_id: SliceId,
    pub measurement: BTreeMap<CellId, SignalReport>,
    pub allocated_prbs: u32,
    pub throughput_mbps: f64,
    pub handovers: u32,
}

impl Ue {
    pub fn serving_report(&self) -> Option<&SignalReport> {
        self.measurement.get(&self.serving_cell)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub base_station: BsId,
    pub position: Vec2,
    pub tx_power: f64,
    pub prb_capacity: u32,
    /// PRBs the scheduler may hand out; at most `prb_capacity`.
    pub prb_quota: u32,
    pub load: f64,
    pub allocated_prbs: u32,
    pub demand_prbs: u32,
    pub handovers_in: u32,
    pub handovers_out: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: BsId,
    pub cells: Vec<CellId>,
    pub backhaul_mbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub id: SliceId,
    pub name: String,
    pub admitted_ues: BTreeSet<UeId>,
}

/// Commands applied at the start of the next tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum SimCommand {
    Handover { ue: UeId, target: CellId },
    PrbQuota { cell: CellId, prbs: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    pub tick: u64,
    pub state_version: u64,
    pub events: Vec<NetworkEvent>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadioParams {
    pub pathloss: PathlossModel,
    pub noise_floor_dbm: f64,
    pub handover: HandoverParams,
}

/// The simulator state and single source of ground truth.
#[derive(Clone, Debug)]
pub struct World {
    tick: u64,
    tick_seconds: f64,
    arena: Arena,
    ues: BTreeMap<UeId, Ue>,
    cells: BTreeMap<CellId, Cell>,
    base_stations: BTreeMap<BsId, BaseStation>,
    slices: BTreeMap<SliceId, Slice>,
    edge_servers: Vec<ServerId>,
    rng_seed: u64,
    state_version: u64,
    radio: RadioParams,
    a3_timers: BTreeMap<UeId, BTreeMap<CellId, u32>>,
    last_handover: BTreeMap<UeId, u64>,
    commands: Vec<SimCommand>,
    pending_events: Vec<NetworkEvent>,
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidConfig(msg.into())
}

fn validate(config: &SimConfig) -> Result<(), SimError> {
    let a = config.arena;
    if !(a.width.is_finite() && a.height.is_finite() && a.width > 0.0 && a.height > 0.0) {
        return Err(invalid("arena dimensions must be positive"));
    }
    if !(config.tick_seconds.is_finite() && config.tick_seconds > 0.0) {
        return Err(invalid("tick_seconds must be positive"));
    }
    if config.cells.is_empty() {
        return Err(invalid("at least one cell is required"));
    }
    let mut seen = BTreeSet::new();
    for c in &config.cells {
        if !seen.insert(c.id) {
            return Err(invalid(format!("duplicate cell id {}", c.id)));
        }
        if c.prb_capacity == 0 {
            return Err(invalid(format!("cell {} has zero prb_capacity", c.id)));
        }
        if !c.tx_power_dbm.is_finite() || !c.position.is_finite() {
            return Err(invalid(format!("cell {} has non-finite parameters", c.id)));
        }
    }
    let p = config.pathloss;
    if !(p.d0 > 0.0 && p.d0.is_finite() && p.l0.is_finite() && p.n.is_finite() && p.n >= 0.0) {
        return Err(invalid("pathloss parameters must be finite with d0 > 0"));
    }
    if !config.noise_floor_dbm.is_finite() || !config.handover.hysteresis_db.is_finite() {
        return Err(invalid("noise floor and hysteresis must be finite"));
    }
    let [vmin, vmax] = config.velocity_range;
    if !(vmin.is_finite() && vmax.is_finite() && 0.0 <= vmin && vmin <= vmax) {
        return Err(invalid("velocity_range must satisfy 0 <= min <= max"));
    }
    if config.traffic_range[0] > config.traffic_range[1] {
        return Err(invalid("traffic_range must satisfy min <= max"));
    }
    Ok(())
}

/// Folds a coordinate into `[0, extent]` by mirror reflection. Returns the
/// folded coordinate and whether the direction of travel is reversed.
fn reflect(coord: f64, extent: f64) -> (f64, bool) {
    if (0.0..=extent).contains(&coord) {
        return (coord, false);
    }
    let period = 2.0 * extent;
    let folded = coord.rem_euclid(period);
    let crossings = (coord / extent).floor() as i64;
    let pos = if folded <= extent {
        folded
    } else {
        period - folded
    };
    (pos, crossings.rem_euclid(2) == 1)
}

impl World {
    pub fn from_config(config: &SimConfig) -> Result<Self, SimError> {
        validate(config)?;

        let mut cells = BTreeMap::new();
        let mut base_stations: BTreeMap<BsId, BaseStation> = BTreeMap::new();
        for bs in &config.base_stations {
            base_stations.insert(
                bs.id,
                BaseStation {
                    id: bs.id,
                    cells: Vec::new(),
                    backhaul_mbps: bs.backhaul_mbps,
                },
            );
        }
        for c in &config.cells {
            cells.insert(
                c.id,
                Cell {
                    id: c.id,
                    base_station: c.base_station,
                    position: c.position,
                    tx_power: c.tx_power_dbm,
                    prb_capacity: c.prb_capacity,
                    prb_quota: c.prb_capacity,
                    load: 0.0,
                    allocated_prbs: 0,
                    demand_prbs: 0,
                    handovers_in: 0,
                    handovers_out: 0,
                },
            );
            base_stations
                .entry(c.base_station)
                .or_insert_with(|| BaseStation {
                    id: c.base_station,
                    cells: Vec::new(),
                    backhaul_mbps: 1000.0,
                })
                .cells
                .push(c.id);
        }

        let mut slices = BTreeMap::new();
        for s in &config.slices {
            slices.insert(
                s.id,
                Slice {
                    id: s.id,
                    name: s.name.clone(),
                    admitted_ues: BTreeSet::new(),
                },
            );
        }
        if slices.is_empty() {
            slices.insert(
                SliceId(1),
                Slice {
                    id: SliceId(1),
                    name: "default".into(),
                    admitted_ues: BTreeSet::new(),
                },
            );
        }

        let mut world = World {
            tick: 0,
            tick_seconds: config.tick_seconds,
            arena: config.arena,
            ues: BTreeMap::new(),
            cells,
            base_stations,
            slices,
            edge_servers: Vec::new(),
            rng_seed: config.seed,
            state_version: 0,
            radio: RadioParams {
                pathloss: config.pathloss,
                noise_floor_dbm: config.noise_floor_dbm,
                handover: config.handover,
            },
            a3_timers: BTreeMap::new(),
            last_handover: BTreeMap::new(),
            commands: Vec::new(),
            pending_events: Vec::new(),
        };

        for ue in &config.ues {
            world.attach_ue(ue.clone())?;
        }

        let slice_ids: Vec<SliceId> = world.slices.keys().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let first_id = world.ues.keys().last().map_or(1, |id| id.0 + 1);
        for i in 0..config.ue_count {
            let position = Vec2::new(
                rng.random_range(0.0..=config.arena.width),
                rng.random_range(0.0..=config.arena.height),
            );
            let [vmin, vmax] = config.velocity_range;
            let speed = if vmax > vmin {
                rng.random_range(vmin..vmax)
            } else {
                vmin
            };
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            let demand = rng.random_range(config.traffic_range[0]..=config.traffic_range[1]);
            let ue = UeConfig {
                id: UeId(first_id + i),
                position,
                velocity: Vec2::new(speed * heading.cos(), speed * heading.sin()),
                traffic_demand: demand,
                slice: Some(slice_ids[i as usize % slice_ids.len()]),
            };
            world.attach_ue(ue)?;
        }
        Ok(world)
    }

    /// Admits a UE onto the strongest cell. Authentication is modeled as a
    /// slice-existence admission check only.
    pub fn attach_ue(&mut self, config: UeConfig) -> Result<UeId, SimError> {
        if self.ues.contains_key(&config.id) {
            return Err(SimError::DuplicateUe(config.id));
        }
        if !config.position.is_finite() || !config.velocity.is_finite() {
            return Err(invalid(format!("UE {} has non-finite kinematics", config.id)));
        }
        let slice = config
            .slice
            .unwrap_or_else(|| *self.slices.keys().next().expect("at least one slice"));
        if !self.slices.contains_key(&slice) {
            return Err(SimError::AdmissionRejected {
                ue: config.id,
                slice,
            });
        }
        let position = Vec2::new(
            reflect(config.position.x, self.arena.width).0,
            reflect(config.position.y, self.arena.height).0,
        );
        let measurement = self.measure(position);
        let serving = strongest(&measurement);
        self.ues.insert(
            config.id,
            Ue {
                id: config.id,
                position,
                velocity: config.velocity,
                serving_cell: serving,
                traffic_demand: config.traffic_demand,
                slice_id: slice,
                measurement,
                allocated_prbs: 0,
                throughput_mbps: 0.0,
                handovers: 0,
            },
        );
        self.slices
            .get_mut(&slice)
            .expect("checked above")
            .admitted_ues
            .insert(config.id);
        self.pending_events.push(NetworkEvent {
            tick: self.tick,
            payload: EventPayload::UEAttached {
                ue: config.id,
                cell: serving,
                slice,
            },
        });
        self.state_version += 1;
        Ok(config.id)
    }

    fn measure(&self, position: Vec2) -> BTreeMap<CellId, SignalReport> {
        let rsrps: Vec<(CellId, f64)> = self
            .cells
            .values()
            .map(|c| {
                (
                    c.id,
                    compute_rsrp(c.tx_power, c.position, position, &self.radio.pathloss),
                )
            })
            .collect();
        rsrps
            .iter()
            .enumerate()
            .map(|(i, &(cell, rsrp))| {
                let interferers: Vec<f64> = rsrps
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, &(_, r))| r)
                    .collect();
                let sinr = compute_sinr(rsrp, &interferers, self.radio.noise_floor_dbm);
                (
                    cell,
                    SignalReport {
                        cell_id: cell,
                        rsrp,
                        sinr,
                        tick: self.tick,
                    },
                )
            })
            .collect()
    }

    /// Queues a command for the start of the next tick.
    pub fn enqueue(&mut self, command: SimCommand) {
        self.commands.push(command);
    }

    pub fn pending_commands(&self) -> &[SimCommand] {
        &self.commands
    }

    pub fn register_edge_server(&mut self, id: ServerId) {
        if !self.edge_servers.contains(&id) {
            self.edge_servers.push(id);
            self.edge_servers.sort();
            self.state_version += 1;
        }
    }

    /// Marks an out-of-band mutation (edge or RIC state) as a new version.
    pub fn touch(&mut self) {
        self.state_version += 1;
    }

    /// Stages an event for emission in the next tick report.
    pub fn push_event(&mut self, payload: EventPayload) {
        self.pending_events.push(NetworkEvent {
            tick: self.tick,
            payload,
        });
    }

    pub fn step(&mut self) -> TickReport {
        self.step_with(Vec::new())
    }

    /// Advances one tick. Phases run in fixed order: queued commands,
    /// mobility, measurement, A3 handover, PRB allocation, event emission.
    pub fn step_with(&mut self, extra_events: Vec<NetworkEvent>) -> TickReport {
        let now = self.tick + 1;
        let mut events = std::mem::take(&mut self.pending_events);
        events.extend(extra_events);

        for command in std::mem::take(&mut self.commands) {
            match command {
                SimCommand::Handover { ue, target } => {
                    if let Some(ev) = self.execute_commanded_handover(ue, target, now) {
                        events.push(ev);
                    }
                }
                SimCommand::PrbQuota { cell, prbs } => {
                    if let Some(c) = self.cells.get_mut(&cell) {
                        c.prb_quota = prbs.min(c.prb_capacity);
                    } else {
                        tracing::debug!(%cell, "quota change for unknown cell ignored");
                    }
                }
            }
        }

        let dt = self.tick_seconds;
        let arena = self.arena;
        for ue in self.ues.values_mut() {
            let (x, flip_x) = reflect(ue.position.x + ue.velocity.x * dt, arena.width);
            let (y, flip_y) = reflect(ue.position.y + ue.velocity.y * dt, arena.height);
            ue.position = Vec2::new(x, y);
            if flip_x {
                ue.velocity.x = -ue.velocity.x;
            }
            if flip_y {
                ue.velocity.y = -ue.velocity.y;
            }
        }

        self.tick = now;
        let ids: Vec<UeId> = self.ues.keys().copied().collect();
        for id in &ids {
            let m = self.measure(self.ues[id].position);
            self.ues.get_mut(id).expect("listed").measurement = m;
        }

        let params = self.radio.handover;
        for id in &ids {
            let ue = &self.ues[id];
            let reports: Vec<SignalReport> = ue.measurement.values().copied().collect();
            let serving = ue.serving_cell;
            let timers = self.a3_timers.entry(*id).or_default();
            let decision = check_handover(&reports, serving, &params, timers);
            if let Some(d) = decision {
                if self.handover_allowed(*id, now) {
                    events.push(self.execute_handover(*id, d.target, HandoverCause::A3, now));
                }
            }
        }

        let mut demands: BTreeMap<CellId, BTreeMap<UeId, u32>> =
            self.cells.keys().map(|&c| (c, BTreeMap::new())).collect();
        for ue in self.ues.values() {
            demands
                .get_mut(&ue.serving_cell)
                .expect("serving cell exists")
                .insert(ue.id, ue.traffic_demand);
        }
        for (cell_id, cell_demands) in &demands {
            let cell = self.cells.get_mut(cell_id).expect("listed");
            let alloc = allocate_prbs(cell.prb_quota, cell_demands);
            let total: u32 = alloc.values().sum();
            let previous = cell.load;
            cell.allocated_prbs = total;
            cell.demand_prbs = cell_demands.values().sum();
            cell.load = f64::from(total) / f64::from(cell.prb_capacity);
            if cell.load != previous {
                events.push(NetworkEvent {
                    tick: now,
                    payload: EventPayload::CellLoadChanged {
                        cell: *cell_id,
                        previous,
                        load: cell.load,
                    },
                });
            }
            for (ue_id, prbs) in alloc {
                let ue = self.ues.get_mut(&ue_id).expect("demand from existing UE");
                let sinr = ue.serving_report().map_or(f64::NEG_INFINITY, |r| r.sinr);
                ue.allocated_prbs = prbs;
                ue.throughput_mbps = throughput_mbps(prbs, sinr);
            }
        }

        self.state_version += 1;
        let mean_load =
            self.cells.values().map(|c| c.load).sum::<f64>() / self.cells.len() as f64;
        events.push(NetworkEvent {
            tick: now,
            payload: EventPayload::TickCompleted {
                state_version: self.state_version,
                ues: self.ues.len(),
                mean_load,
            },
        });
        events.sort_by(NetworkEvent::emission_order);

        TickReport {
            tick: now,
            state_version: self.state_version,
            events,
        }
    }

    fn handover_allowed(&self, ue: UeId, now: u64) -> bool {
        let ttt = u64::from(self.radio.handover.ttt_ticks);
        match self.last_handover.get(&ue) {
            Some(&last) => now - last >= ttt,
            None => true,
        }
    }

    fn execute_commanded_handover(
        &mut self,
        ue: UeId,
        target: CellId,
        now: u64,
    ) -> Option<NetworkEvent> {
        let Some(current) = self.ues.get(&ue) else {
            tracing::debug!(%ue, "handover command for unknown UE ignored");
            return None;
        };
        if !self.cells.contains_key(&target) || current.serving_cell == target {
            return None;
        }
        if !self.handover_allowed(ue, now) {
            tracing::debug!(%ue, %target, "handover command rejected inside time-to-trigger");
            return None;
        }
        Some(self.execute_handover(ue, target, HandoverCause::Commanded, now))
    }

    fn execute_handover(
        &mut self,
        ue_id: UeId,
        target: CellId,
        cause: HandoverCause,
        now: u64,
    ) -> NetworkEvent {
        let ue = self.ues.get_mut(&ue_id).expect("caller checked");
        let source = ue.serving_cell;
        ue.serving_cell = target;
        ue.handovers += 1;
        self.a3_timers.remove(&ue_id);
        self.last_handover.insert(ue_id, now);
        if let Some(c) = self.cells.get_mut(&source) {
            c.handovers_out += 1;
        }
        if let Some(c) = self.cells.get_mut(&target) {
            c.handovers_in += 1;
        }
        NetworkEvent {
            tick: now,
            payload: EventPayload::HandoverExecuted {
                ue: ue_id,
                source,
                target,
                cause,
            },
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn tick_seconds(&self) -> f64 {
        self.tick_seconds
    }

    pub fn arena(&self) -> Arena {
        self.arena
    }

    pub fn state_version(&self) -> u64 {
        self.state_version
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn ue(&self, id: UeId) -> Option<&Ue> {
        self.ues.get(&id)
    }

    pub fn ues(&self) -> impl Iterator<Item = &Ue> {
        self.ues.values()
    }

    pub fn cell(&self, id: CellId) -> Option<&Cell> {
        self.cells.get(&id)
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    pub fn base_station(&self, id: BsId) -> Option<&BaseStation> {
        self.base_stations.get(&id)
    }

    pub fn base_stations(&self) -> impl Iterator<Item = &BaseStation> {
        self.base_stations.values()
    }

    pub fn slice(&self, id: SliceId) -> Option<&Slice> {
        self.slices.get(&id)
    }

    pub fn slices(&self) -> impl Iterator<Item = &Slice> {
        self.slices.values()
    }

    pub fn edge_servers(&self) -> &[ServerId] {
        &self.edge_servers
    }

    pub fn last_handover_tick(&self, ue: UeId) -> Option<u64> {
        self.last_handover.get(&ue).copied()
    }

    /// Checks the structural invariants; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        for ue in self.ues.values() {
            if !self.cells.contains_key(&ue.serving_cell) {
                return Err(format!("UE {} served by missing cell", ue.id));
            }
            if !ue.position.is_finite() {
                return Err(format!("UE {} has non-finite position", ue.id));
            }
            let in_slices = self
                .slices
                .values()
                .filter(|s| s.admitted_ues.contains(&ue.id))
                .count();
            if in_slices != 1 {
                return Err(format!("UE {} belongs to {in_slices} slices", ue.id));
            }
        }
        for cell in self.cells.values() {
            if !self.base_stations.contains_key(&cell.base_station) {
                return Err(format!("cell {} has no base station", cell.id));
            }
            if !(0.0..=1.0).contains(&cell.load) {
                return Err(format!("cell {} load {} out of range", cell.id, cell.load));
            }
        }
        Ok(())
    }
}

fn strongest(measurement: &BTreeMap<CellId, SignalReport>) -> CellId {
    let mut best: Option<&SignalReport> = None;
    for r in measurement.values() {
        if best.is_none_or(|b| r.rsrp > b.rsrp) {
            best = Some(r);
        }
    }
    best.expect("at least one cell").cell_id
}
