//! Desk-scale AI-RAN testbed core.
//!
//! * [`sim`]: the radio emulator and its [`World`](sim::World).
//! * [`ric`]: xApp registry, event fan-out and AI service subscriptions.
//! * [`edge`]: AI service catalog, profiling, placement and deployment.
//! * [`knowledge`]: pattern-routed knowledge queries with version-keyed caching.
//! * [`testbed`]: everything wired together behind one tick owner.

pub mod edge;
pub mod ids;
pub mod knowledge;
pub mod ric;
pub mod sim;
pub mod testbed;

pub use ids::{BsId, CellId, DeploymentId, ServerId, ServiceId, SliceId, UeId};
