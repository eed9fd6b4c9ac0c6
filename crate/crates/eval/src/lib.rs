//! HATT-E: scenario-driven evaluation of multi-turn network agents.
//!
//! Every turn is scored on planning fidelity, tool accuracy and end-to-end
//! success; ungrounded claims are counted separately.

pub mod fixtures;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod score;
pub mod suite;

use thiserror::Error;

pub use report::{render_table, Report, Timing};
pub use runner::{evaluate, run_scenario, run_suite, ScenarioTrace, TurnRecord};
pub use scenario::{load_scenarios, parse_suite, Difficulty, GroundTruth, Scenario, SchemaError, SuiteFile};
pub use score::{Judge, LayerScores, TokenF1Judge};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io: {0}")]
    Io(String),
    #[error("testbed: {0}")]
    Testbed(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("no traces to aggregate")]
    EmptyInput,
    #[error("trace mismatch: {0}")]
    TraceMismatch(String),
}
