//! HTTP gateway and command-line plumbing for the AI-RAN testbed.

pub mod jobs;
pub mod server;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use airan_agent::session::Clock;
use airan_agent::{Backend, HeuristicBackend, RemoteBackend, RemoteConfig, Script, ScriptedBackend, SystemClock};
use airan_core::testbed::{Testbed, TestbedConfig};
use airan_eval::fixtures::reference_script;
use airan_eval::runner::{evaluate, run_suite, write_traces};
use airan_eval::suite::builtin_suite;
use airan_eval::{parse_suite, Report, Scenario, Timing, TokenF1Judge};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Eval(#[from] airan_eval::EvalError),
    #[error("backend: {0}")]
    Backend(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> GatewayError + '_ {
    move |e| GatewayError::Io(format!("{}: {e}", path.display()))
}

/// A preset name or an inline testbed configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestbedSource {
    Preset(String),
    Inline(Box<TestbedConfig>),
}

impl Default for TestbedSource {
    fn default() -> Self {
        TestbedSource::Preset("desk-3cell".into())
    }
}

impl TestbedSource {
    pub fn resolve(&self) -> Result<TestbedConfig, GatewayError> {
        match self {
            TestbedSource::Preset(p) => TestbedConfig::preset(p).map_err(|e| GatewayError::Config(e.to_string())),
            TestbedSource::Inline(c) => Ok((**c).clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Heuristic,
    Scripted,
    Remote,
}

/// Chat backend for interactive sessions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub testbed: TestbedSource,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Concurrent evaluation jobs; defaults to the CPU count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_workers: Option<usize>,
    #[serde(default)]
    pub backend: BackendSpec,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("airan-data")
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            testbed: TestbedSource::default(),
            data_dir: default_data_dir(),
            eval_workers: None,
            backend: BackendSpec::default(),
        }
    }
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }

    pub fn workers(&self) -> usize {
        self.eval_workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

/// `builtin` names the shipped suite; anything else is a file path.
pub fn load_suite(spec: &str) -> Result<Vec<Scenario>, GatewayError> {
    if spec == "builtin" {
        return Ok(builtin_suite().scenarios);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_suite(&text).map_err(airan_eval::EvalError::from)?.scenarios)
}

/// Scripted runs replay `script` when given, otherwise the suite's reference
/// script.
pub fn make_backend(
    kind: BackendKind,
    script: Option<&Path>,
    scenarios: &[Scenario],
) -> Result<Arc<dyn Backend>, GatewayError> {
    Ok(match kind {
        BackendKind::Heuristic => Arc::new(HeuristicBackend),
        BackendKind::Scripted => {
            let script = match script {
                Some(p) => Script::load(p).map_err(|e| GatewayError::Backend(e.to_string()))?,
                None => reference_script(scenarios),
            };
            Arc::new(ScriptedBackend::new(script))
        }
        BackendKind::Remote => {
            let cfg = RemoteConfig::from_env().map_err(|e| GatewayError::Backend(e.to_string()))?;
            Arc::new(RemoteBackend::new(cfg).map_err(|e| GatewayError::Backend(e.to_string()))?)
        }
    })
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub script: Option<PathBuf>,
    pub traces: Option<PathBuf>,
}

/// Runs a suite end to end with wall-clock latency accounting.
pub fn run_eval(scenarios: &[Scenario], kind: BackendKind, opts: &EvalOptions) -> Result<(Report, Timing), GatewayError> {
    let backend = make_backend(kind, opts.script.as_deref(), scenarios)?;
    let clock = || -> Arc<dyn Clock> { Arc::new(SystemClock::default()) };
    let traces = run_suite(scenarios, backend, Some(&clock))?;
    if let Some(p) = &opts.traces {
        write_traces(p, &traces)?;
    }
    let report = evaluate(scenarios, &traces, &TokenF1Judge)?;
    Ok((report, Timing::from_traces(&traces)))
}

/// Report JSON as written to disk: pretty, newline-terminated.
pub fn report_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

/// Writes `report.json` and a `*.timing.json` sidecar next to it.
pub fn write_report(path: &Path, report: &Report, timing: &Timing) -> Result<PathBuf, GatewayError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, report_json(report)).map_err(io_err(path))?;
    let sidecar = path.with_extension("timing.json");
    let body = serde_json::to_string_pretty(timing).expect("timing serializes") + "\n";
    std::fs::write(&sidecar, body).map_err(io_err(&sidecar))?;
    Ok(sidecar)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimSummary {
    pub ticks: u64,
    pub events: usize,
    pub final_tick: u64,
    pub state_version: u64,
}

/// Runs a standalone testbed and writes one event per line.
pub fn run_sim(config: &TestbedConfig, ticks: u64, out: &mut dyn std::io::Write) -> Result<SimSummary, GatewayError> {
    let mut tb = Testbed::new(config).map_err(|e| GatewayError::Config(e.to_string()))?;
    let mut events = 0;
    let mut last = (0, 0);
    for _ in 0..ticks {
        let r = tb.tick();
        for e in &r.events {
            let line = serde_json::to_string(e).expect("event serializes");
            writeln!(out, "{line}").map_err(|e| GatewayError::Io(e.to_string()))?;
            events += 1;
        }
        last = (r.tick, r.state_version);
    }
    Ok(SimSummary {
        ticks,
        events,
        final_tick: last.0,
        state_version: last.1,
    })
}
