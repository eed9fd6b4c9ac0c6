//! Scripted agents with known behaviour, used to check the scorer itself.

use std::collections::HashSet;

use airan_agent::backend::{ScriptedIntent, StepContext, TurnContext};
use airan_agent::{AgentError, Backend, Decision, Intent, PlanChoice, Script, ScriptEntry, ScriptStep, ScriptedBackend};

use crate::scenario::{ground_truth_call, GroundTruth, Scenario, ScenarioTurn};
use crate::suite::turn_subset;

/// Number appended by [`InjectionBackend`]; no payload carries it.
pub const INJECTED_VALUE: &str = "987654.321";

fn tool_steps(turn: &ScenarioTurn) -> Vec<ScriptStep> {
    turn.reference_tool_calls
        .iter()
        .map(|c| ScriptStep::ToolRequest {
            tool: c.tool.clone(),
            params: c.required_params.clone(),
        })
        .collect()
}

fn answer(turn: &ScenarioTurn) -> String {
    match &turn.ground_truth {
        GroundTruth::Rubric { reference_answer_text } => reference_answer_text.clone(),
        GroundTruth::Deterministic {
            pointer,
            entity_kind,
            expected_value,
            ..
        } => {
            // Pinned profile answers are read from the first call.
            let k = ground_truth_call(turn).or(expected_value.as_ref().map(|_| 0));
            let slot = k.map_or_else(|| "n/a".to_string(), |k| format!("{{{{{k}{pointer}}}}}"));
            match entity_kind {
                Some(k) => format!("Answer: {} {slot}.", k.as_str()),
                None => format!("Answer: {slot}."),
            }
        }
    }
}

fn entry(sc: &Scenario, i: usize, plan: Vec<String>, mut steps: Vec<ScriptStep>, text: String) -> ScriptEntry {
    steps.push(ScriptStep::FinalText { text });
    ScriptEntry {
        scenario_id: sc.id.clone(),
        turn_index: i,
        intent: Some(ScriptedIntent {
            category: sc.category.clone(),
            entities: None,
        }),
        plan: Some(plan),
        steps,
    }
}

/// An agent that follows the primary reference exactly and answers with the
/// ground-truth field read from its own tool calls.
pub fn reference_script(scenarios: &[Scenario]) -> Script {
    let entries = scenarios
        .iter()
        .flat_map(|sc| {
            sc.turns.iter().enumerate().map(move |(i, t)| {
                let plan = t.reference_plans.first().cloned().unwrap_or_default();
                entry(sc, i, plan, tool_steps(t), answer(t))
            })
        })
        .collect();
    Script { entries }
}

/// Plans and executes only the first reference step of every turn and gives
/// an answer without figures.
pub fn half_planner_script(scenarios: &[Scenario]) -> Script {
    let entries = scenarios
        .iter()
        .flat_map(|sc| {
            sc.turns.iter().enumerate().map(move |(i, t)| {
                let plan: Vec<String> = t.reference_plans.first().and_then(|p| p.first()).cloned().into_iter().collect();
                let steps = tool_steps(t).into_iter().take(1).collect();
                entry(sc, i, plan, steps, "Partial answer.".to_string())
            })
        })
        .collect();
    Script { entries }
}

/// Turn keys `(scenario, turn)` chosen so that exactly `round(p * n)` of the
/// `n` turns are marked, spread evenly.
pub fn injection_schedule(scenarios: &[Scenario], p: f64) -> HashSet<(String, usize)> {
    let keys: Vec<(String, usize)> = scenarios
        .iter()
        .flat_map(|sc| (0..sc.turns.len()).map(move |i| (sc.id.clone(), i)))
        .collect();
    let n = keys.len() as u64;
    let target = (p.clamp(0.0, 1.0) * n as f64).round() as u64;
    keys.into_iter()
        .enumerate()
        .filter(|(k, _)| {
            let k = *k as u64;
            ((k + 1) * target) / n.max(1) > (k * target) / n.max(1)
        })
        .map(|(_, key)| key)
        .collect()
}

/// Wraps a backend and appends an unsupported figure to scheduled answers.
pub struct InjectionBackend<B> {
    inner: B,
    schedule: HashSet<(String, usize)>,
}

impl<B: Backend> InjectionBackend<B> {
    pub fn new(inner: B, schedule: HashSet<(String, usize)>) -> Self {
        Self { inner, schedule }
    }
}

impl<B: Backend> Backend for InjectionBackend<B> {
    fn name(&self) -> &str {
        "injection"
    }

    fn classify(&self, ctx: &TurnContext<'_>) -> Result<Option<Intent>, AgentError> {
        self.inner.classify(ctx)
    }

    fn plan(&self, ctx: &TurnContext<'_>, intent: &Intent) -> Result<PlanChoice, AgentError> {
        self.inner.plan(ctx, intent)
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, AgentError> {
        let d = self.inner.decide(ctx)?;
        let key = (ctx.turn.scenario_id.unwrap_or_default().to_string(), ctx.turn.turn_index);
        Ok(match d {
            Decision::FinalText { text } if self.schedule.contains(&key) => Decision::FinalText {
                text: format!("{text} {INJECTED_VALUE}"),
            },
            other => other,
        })
    }
}

/// The first `turns` turns of the suite (whole scenarios) and a perfect
/// agent that hallucinates on a `p` share of them.
pub fn injection_setup(scenarios: &[Scenario], turns: usize, p: f64) -> (Vec<Scenario>, InjectionBackend<ScriptedBackend>) {
    let subset = turn_subset(scenarios, turns);
    let schedule = injection_schedule(&subset, p);
    let backend = InjectionBackend::new(ScriptedBackend::new(reference_script(&subset)), schedule);
    (subset, backend)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::builtin_scenarios;

    #[test]
    fn schedule_hits_exact_counts() {
        let sub = turn_subset(&builtin_scenarios(), 100);
        for (p, want) in [(0.0, 0), (0.25, 25), (0.43, 43), (1.0, 100)] {
            assert_eq!(injection_schedule(&sub, p).len(), want);
        }
    }
}
