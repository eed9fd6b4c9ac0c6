use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::ids::{CellId, DeploymentId, ServiceId, SliceId, UeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    UEAttached,
    HandoverExecuted,
    CellLoadChanged,
    TickCompleted,
    AIServiceEvent,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::UEAttached,
        EventKind::HandoverExecuted,
        EventKind::CellLoadChanged,
        EventKind::TickCompleted,
        EventKind::AIServiceEvent,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverCause {
    A3,
    Commanded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventPayload {
    UEAttached {
        ue: UeId,
        cell: CellId,
        slice: SliceId,
    },
    HandoverExecuted {
        ue: UeId,
        source: CellId,
        target: CellId,
        cause: HandoverCause,
    },
    CellLoadChanged {
        cell: CellId,
        previous: f64,
        load: f64,
    },
    TickCompleted {
        state_version: u64,
        ues: usize,
        mean_load: f64,
    },
    AIServiceEvent {
        service: ServiceId,
        deployment: DeploymentId,
        state: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkEvent {
    pub tick: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl NetworkEvent {
    pub fn kind(&self) -> EventKind {
        match self.payload {
            EventPayload::UEAttached { .. } => EventKind::UEAttached,
            EventPayload::HandoverExecuted { .. } => EventKind::HandoverExecuted,
            EventPayload::CellLoadChanged { .. } => EventKind::CellLoadChanged,
            EventPayload::TickCompleted { .. } => EventKind::TickCompleted,
            EventPayload::AIServiceEvent { .. } => EventKind::AIServiceEvent,
        }
    }

    /// Emission order within a tick: UE-scoped events by UE id then kind,
    /// then cell-scoped events by cell id, then AI service events, then the
    /// tick marker.
    fn order_key(&self) -> (u64, u8, u32, EventKind) {
        let (scope, id) = match &self.payload {
            EventPayload::UEAttached { ue, .. } | EventPayload::HandoverExecuted { ue, .. } => {
                (0, ue.0)
            }
            EventPayload::CellLoadChanged { cell, .. } => (1, cell.0),
            EventPayload::AIServiceEvent { deployment, .. } => (2, deployment.0),
            EventPayload::TickCompleted { .. } => (3, 0),
        };
        (self.tick, scope, id, self.kind())
    }

    pub(crate) fn emission_order(a: &Self, b: &Self) -> Ordering {
        a.order_key().cmp(&b.order_key())
    }
}
