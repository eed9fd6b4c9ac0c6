//! Discrete-tick AI-RAN emulator: UE mobility and traffic, radio propagation
//! and interference, A3 handover, and PRB-level scheduling.

mod config;
mod event;
pub mod radio;
mod world;

pub use config::{Arena, BaseStationConfig, CellConfig, SimConfig, SliceConfig, UeConfig};
pub use event::{EventKind, EventPayload, HandoverCause, NetworkEvent};
pub use radio::{
    allocate_prbs, check_handover, compute_rsrp, compute_sinr, HandoverDecision, HandoverParams,
    PathlossModel, SignalReport, Vec2,
};
pub use world::{
    BaseStation, Cell, RadioParams, SimCommand, SimError, Slice, TickReport, Ue, World,
};
