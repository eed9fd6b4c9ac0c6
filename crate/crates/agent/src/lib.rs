//! Conversational network agents for the AI-RAN testbed.
//!
//! A turn runs intent classification, a plan, a tool loop driven by a
//! [`Backend`], and a response whose claims are grounded against the
//! recorded tool calls.

pub mod backend;
pub mod claims;
pub mod intent;
pub mod plan;
pub mod remote;
pub mod render;
pub mod session;
pub mod tools;

use thiserror::Error;

pub use backend::{Backend, Decision, HeuristicBackend, PlanChoice, Script, ScriptEntry, ScriptStep, ScriptedBackend};
pub use claims::{Claim, ClaimValue};
pub use intent::{classify_intent, EntityKind, EntityRef, Intent};
pub use plan::{Persona, Plan, PlanStep};
pub use remote::{RemoteBackend, RemoteConfig};
pub use session::{
    Agent, AgentResponse, Clock, ConversationSession, EventBody, StepClock, SystemClock, ToolCall, Turn,
    TurnError, TurnErrorKind, TurnEvent,
};
pub use tools::{TestbedTools, ToolFamily, ToolHost, ToolResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("empty utterance")]
    EmptyUtterance,
    #[error("turn exceeded {0} steps without a final answer")]
    StepLimit(usize),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("script error: {0}")]
    Script(String),
}
