//! Sessions, turns, the streamed turn events and the turn loop.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{Backend, Decision, PlanChoice, StepContext, TurnContext};
use crate::claims::{ground_claims, Claim};
use crate::intent::{classify_intent, mention_history, Intent};
use crate::plan::{template_plan, Persona, Plan, PlanStep};
use crate::tools::{tool_family, Params, ToolFamily, ToolHost, ToolResult};
use crate::AgentError;

pub const DEFAULT_MAX_STEPS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub tool: String,
    pub family: ToolFamily,
    pub params: Params,
    pub result: ToolResult,
    pub state_version: u64,
    pub issued_at_step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verified: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub text: String,
    pub claims: Vec<Claim>,
}

impl AgentResponse {
    pub fn ungrounded(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| c.grounding.is_none())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnErrorKind {
    EmptyUtterance,
    Backend,
    StepLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnError {
    pub kind: TurnErrorKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub utterance: String,
    pub intent: Intent,
    pub plan: Plan,
    pub tool_calls: Vec<ToolCall>,
    pub response: AgentResponse,
    pub latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<TurnError>,
}

impl Turn {
    /// Rebuilds a turn from its event stream. Fails on gaps, duplicates or
    /// a missing intent/final/metrics event.
    pub fn from_events(events: &[TurnEvent]) -> Result<Turn, String> {
        let mut intent = None;
        let mut steps = Vec::new();
        let mut calls: Vec<ToolCall> = Vec::new();
        let mut response = None;
        let mut metrics = None;
        for (i, ev) in events.iter().enumerate() {
            if ev.seq != i as u64 {
                return Err(format!("expected sequence {i}, found {}", ev.seq));
            }
            match &ev.body {
                EventBody::Intent { utterance, intent: it } => intent = Some((ev.turn, utterance.clone(), it.clone())),
                EventBody::PlanStep { index, step } => {
                    if *index != steps.len() {
                        return Err(format!("plan step {index} out of order"));
                    }
                    steps.push(step.clone());
                }
                EventBody::ToolCall { id, tool, family, params, issued_at_step } => calls.push(ToolCall {
                    id: id.clone(),
                    tool: tool.clone(),
                    family: *family,
                    params: params.clone(),
                    result: ToolResult::Error("no result recorded".into()),
                    state_version: 0,
                    issued_at_step: *issued_at_step,
                    verified: None,
                }),
                EventBody::ToolResult { id, result, state_version, verified } => {
                    let call = calls
                        .iter_mut()
                        .rev()
                        .find(|c| &c.id == id)
                        .ok_or_else(|| format!("result for unknown call {id}"))?;
                    call.result = result.clone();
                    call.state_version = *state_version;
                    call.verified = *verified;
                }
                EventBody::FinalText { response: r } => response = Some(r.clone()),
                EventBody::Metrics { latency_s, notes, error, .. } => metrics = Some((*latency_s, notes.clone(), error.clone())),
            }
        }
        let (index, utterance, intent) = intent.ok_or("missing intent event")?;
        let (latency_s, notes, error) = metrics.ok_or("missing metrics event")?;
        Ok(Turn {
            index,
            utterance,
            intent,
            plan: Plan { steps, notes },
            tool_calls: calls,
            response: response.ok_or("missing final_text event")?,
            latency_s,
            error,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub seq: u64,
    pub turn: usize,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    Intent {
        utterance: String,
        intent: Intent,
    },
    PlanStep {
        index: usize,
        step: PlanStep,
    },
    ToolCall {
        id: String,
        tool: String,
        family: ToolFamily,
        params: Params,
        issued_at_step: usize,
    },
    ToolResult {
        id: String,
        result: ToolResult,
        state_version: u64,
        #[serde(default)]
        verified: Option<bool>,
    },
    FinalText {
        response: AgentResponse,
    },
    Metrics {
        latency_s: f64,
        steps: usize,
        notes: Vec<String>,
        error: Option<TurnError>,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Intent { .. } => "intent",
            EventBody::PlanStep { .. } => "plan_step",
            EventBody::ToolCall { .. } => "tool_call",
            EventBody::ToolResult { .. } => "tool_result",
            EventBody::FinalText { .. } => "final_text",
            EventBody::Metrics { .. } => "metrics",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationSession {
    pub id: String,
    pub persona: Persona,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
    pub turns: Vec<Turn>,
}

impl ConversationSession {
    pub fn new(id: impl Into<String>, persona: Persona) -> Self {
        Self {
            id: id.into(),
            persona,
            scenario_id: None,
            turns: Vec::new(),
        }
    }

    pub fn for_scenario(mut self, scenario: impl Into<String>) -> Self {
        self.scenario_id = Some(scenario.into());
        self
    }
}

/// Seconds since an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now_s(&self) -> f64;
}

#[derive(Debug)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Advances a fixed number of microseconds per reading.
#[derive(Debug, Default)]
pub struct StepClock {
    step_us: u64,
    ticks: AtomicU64,
}

impl StepClock {
    pub fn new(step_us: u64) -> Self {
        Self {
            step_us,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Clock for StepClock {
    fn now_s(&self) -> f64 {
        let n = self.ticks.fetch_add(1, Ordering::Relaxed);
        (n * self.step_us) as f64 / 1e6
    }
}

const EMPTY_TEXT: &str = "Please tell me what you would like to know about the network.";
const BACKEND_TEXT: &str = "The request could not be completed because the language model backend failed.";
const STEP_LIMIT_TEXT: &str = "The request was stopped because it needed too many steps.";

/// Runs turns: intent, plan, tool execution, response.
#[derive(Clone)]
pub struct Agent {
    backend: Arc<dyn Backend>,
    tools: Arc<dyn ToolHost>,
    clock: Arc<dyn Clock>,
    max_steps: usize,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("backend", &self.backend.name())
            .field("max_steps", &self.max_steps)
            .finish()
    }
}

struct Emitter<'a> {
    seq: u64,
    turn: usize,
    sink: &'a mut dyn FnMut(&TurnEvent),
}

impl Emitter<'_> {
    fn emit(&mut self, body: EventBody) {
        let ev = TurnEvent {
            seq: self.seq,
            turn: self.turn,
            body,
        };
        self.seq += 1;
        (self.sink)(&ev);
    }
}

impl Agent {
    pub fn new(backend: Arc<dyn Backend>, tools: Arc<dyn ToolHost>) -> Self {
        Self {
            backend,
            tools,
            clock: Arc::new(SystemClock::default()),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    pub fn run_turn(&self, session: &mut ConversationSession, utterance: &str) -> Turn {
        self.run_turn_streaming(session, utterance, &mut |_| {})
    }

    /// Runs one turn, handing each event to `sink` as it happens, and
    /// appends the turn to the session.
    pub fn run_turn_streaming(
        &self,
        session: &mut ConversationSession,
        utterance: &str,
        sink: &mut dyn FnMut(&TurnEvent),
    ) -> Turn {
        let start = self.clock.now_s();
        let index = session.turns.len();
        let mut em = Emitter { seq: 0, turn: index, sink };
        let history = mention_history(session.turns.iter().map(|t| &t.intent));
        let ctx = TurnContext {
            session_id: &session.id,
            scenario_id: session.scenario_id.as_deref(),
            turn_index: index,
            utterance,
            persona: session.persona,
            history: &session.turns,
        };

        let mut plan = Plan::default();
        let mut calls: Vec<ToolCall> = Vec::new();
        let mut steps = 0;
        let mut error: Option<TurnError> = None;
        let mut final_text: Option<String> = None;

        let intent = match self.intent(&ctx, &history) {
            Ok(i) => i,
            Err(e) => {
                error = Some(turn_error(&e));
                Intent::general()
            }
        };
        em.emit(EventBody::Intent {
            utterance: utterance.to_string(),
            intent: intent.clone(),
        });

        if error.is_none() {
            let mut from_calls = false;
            match self.backend.plan(&ctx, &intent) {
                Ok(PlanChoice::Declared(p)) => plan = p.restrict_to(session.persona),
                Ok(PlanChoice::Heuristic) => plan = template_plan(&intent, utterance, session.persona),
                Ok(PlanChoice::FromCalls) => from_calls = true,
                Err(e) => error = Some(turn_error(&e)),
            }
            for (i, step) in plan.steps.iter().enumerate() {
                em.emit(EventBody::PlanStep {
                    index: i,
                    step: step.clone(),
                });
            }
            while error.is_none() && final_text.is_none() {
                if steps == self.max_steps {
                    error = Some(turn_error(&AgentError::StepLimit(self.max_steps)));
                    break;
                }
                let decision = self.backend.decide(&StepContext {
                    turn: &ctx,
                    intent: &intent,
                    plan: &plan,
                    calls: &calls,
                    step: steps,
                });
                steps += 1;
                match decision {
                    Err(e) => error = Some(turn_error(&e)),
                    Ok(Decision::FinalText { text }) => final_text = Some(text),
                    Ok(Decision::ToolRequest { tool, params }) => {
                        let Some(family) = tool_family(&tool) else {
                            plan.notes.push(format!("unknown tool {tool} requested"));
                            continue;
                        };
                        if !session.persona.allows(family) {
                            let note = format!(
                                "delegation refused for user persona: {}",
                                crate::tools::step_label(&tool, &params)
                            );
                            if !plan.notes.contains(&note) {
                                plan.notes.push(note);
                            }
                            continue;
                        }
                        if from_calls {
                            let step = PlanStep::tool(&tool, params.clone());
                            em.emit(EventBody::PlanStep {
                                index: plan.steps.len(),
                                step: step.clone(),
                            });
                            plan.steps.push(step);
                        }
                        let id = format!("call-{index}-{}", calls.len());
                        em.emit(EventBody::ToolCall {
                            id: id.clone(),
                            tool: tool.clone(),
                            family,
                            params: params.clone(),
                            issued_at_step: steps - 1,
                        });
                        let out = self.tools.invoke(&session.id, &tool, &params);
                        em.emit(EventBody::ToolResult {
                            id: id.clone(),
                            result: out.result.clone(),
                            state_version: out.state_version,
                            verified: out.verified,
                        });
                        calls.push(ToolCall {
                            id,
                            tool,
                            family,
                            params,
                            result: out.result,
                            state_version: out.state_version,
                            issued_at_step: steps - 1,
                            verified: out.verified,
                        });
                    }
                }
            }
            if from_calls && !plan.steps.is_empty() {
                let step = PlanStep::synthesize();
                em.emit(EventBody::PlanStep {
                    index: plan.steps.len(),
                    step: step.clone(),
                });
                plan.steps.push(step);
            }
        }

        let text = match (&error, final_text) {
            (None, Some(t)) => t,
            (Some(e), _) => match e.kind {
                TurnErrorKind::EmptyUtterance => EMPTY_TEXT.into(),
                TurnErrorKind::Backend => BACKEND_TEXT.into(),
                TurnErrorKind::StepLimit => STEP_LIMIT_TEXT.into(),
            },
            (None, None) => String::new(),
        };
        let response = AgentResponse {
            claims: ground_claims(&text, &calls),
            text,
        };
        let latency_s = (self.clock.now_s() - start).max(0.0);
        em.emit(EventBody::FinalText {
            response: response.clone(),
        });
        em.emit(EventBody::Metrics {
            latency_s,
            steps,
            notes: plan.notes.clone(),
            error: error.clone(),
        });
        if let Some(e) = &error {
            tracing::warn!(session = %session.id, turn = index, kind = ?e.kind, "turn failed: {}", e.message);
        }
        let turn = Turn {
            index,
            utterance: utterance.to_string(),
            intent,
            plan,
            tool_calls: calls,
            response,
            latency_s,
            error,
        };
        session.turns.push(turn.clone());
        turn
    }

    fn intent(&self, ctx: &TurnContext<'_>, history: &[crate::intent::EntityRef]) -> Result<Intent, AgentError> {
        if ctx.utterance.trim().is_empty() {
            return Err(AgentError::EmptyUtterance);
        }
        match self.backend.classify(ctx)? {
            Some(i) => Ok(i),
            None => classify_intent(ctx.utterance, history),
        }
    }
}

fn turn_error(e: &AgentError) -> TurnError {
    let kind = match e {
        AgentError::EmptyUtterance => TurnErrorKind::EmptyUtterance,
        AgentError::StepLimit(_) => TurnErrorKind::StepLimit,
        _ => TurnErrorKind::Backend,
    };
    TurnError {
        kind,
        message: e.to_string(),
    }
}

/// Payload of a successful call, by position in the turn.
pub fn call_payload(calls: &[ToolCall], index: usize) -> Option<&Value> {
    calls.get(index).and_then(|c| c.result.value())
}
