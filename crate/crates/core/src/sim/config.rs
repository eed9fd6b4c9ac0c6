use serde::{Deserialize, Serialize};

use super::radio::{HandoverParams, PathlossModel, Vec2};
use crate::ids::{BsId, CellId, SliceId, UeId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub id: CellId,
    pub base_station: BsId,
    pub position: Vec2,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_prb_capacity")]
    pub prb_capacity: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStationConfig {
    pub id: BsId,
    #[serde(default = "default_backhaul")]
    pub backhaul_mbps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub id: SliceId,
    pub name: String,
}

/// Explicitly placed UE. Generated UEs (`ue_count`) are added after these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeConfig {
    pub id: UeId,
    pub position: Vec2,
    #[serde(default)]
    pub velocity: Vec2,
    #[serde(default)]
    pub traffic_demand: u32,
    #[serde(default)]
    pub slice: Option<SliceId>,
}

/// Simulator configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub arena: Arena,
    pub cells: Vec<CellConfig>,
    /// Optional per-site settings; sites referenced by cells but absent here get defaults.
    pub base_stations: Vec<BaseStationConfig>,
    pub slices: Vec<SliceConfig>,
    pub ues: Vec<UeConfig>,
    pub ue_count: u32,
    /// Speed range in m/s for generated UEs; heading is uniform.
    pub velocity_range: [f64; 2],
    /// Inclusive PRB demand range for generated UEs.
    pub traffic_range: [u32; 2],
    pub seed: u64,
    pub tick_seconds: f64,
    pub noise_floor_dbm: f64,
    pub pathloss: PathlossModel,
    pub handover: HandoverParams,
}

fn default_tx_power() -> f64 {
    43.0
}

fn default_prb_capacity() -> u32 {
    100
}

fn default_backhaul() -> f64 {
    1000.0
}

impl Default for SimConfig {
    fn default() -> Self {
        let cell = |id: u32, x: f64, y: f64| CellConfig {
            id: CellId(id),
            base_station: BsId(id),
            position: Vec2::new(x, y),
            tx_power_dbm: default_tx_power(),
            prb_capacity: default_prb_capacity(),
        };
        Self {
            arena: Arena {
                width: 600.0,
                height: 400.0,
            },
            cells: vec![
                cell(1, 100.0, 200.0),
                cell(2, 300.0, 200.0),
                cell(3, 500.0, 200.0),
            ],
            base_stations: Vec::new(),
            slices: vec![SliceConfig {
                id: SliceId(1),
                name: "default".into(),
            }],
            ues: Vec::new(),
            ue_count: 12,
            velocity_range: [0.0, 2.0],
            traffic_range: [2, 14],
            seed: 7,
            tick_seconds: 1.0,
            noise_floor_dbm: -104.0,
            pathloss: PathlossModel::default(),
            handover: HandoverParams::default(),
        }
    }
}
