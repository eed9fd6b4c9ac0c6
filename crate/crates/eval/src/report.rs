//! Aggregation of per-turn scores into the evaluation report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use airan_agent::tools::param_string;
use airan_agent::ToolFamily;
use serde::{Deserialize, Serialize};

use crate::runner::ScenarioTrace;
use crate::scenario::{Difficulty, Scenario, HATTE_VERSION};
use crate::score::{score_planning_labels, LayerScores, RUBRIC_PASS};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerMeans {
    pub planning_fidelity: f64,
    pub tool_accuracy: f64,
    pub e2e_success: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolUsage {
    pub knowledge_get: usize,
    pub knowledge_list: usize,
    pub sim_control: usize,
    pub deploy_pipeline: usize,
    /// Share of knowledge reads that targeted a single entity.
    pub single_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScore {
    pub scenario_id: String,
    pub category: String,
    pub difficulty: Difficulty,
    pub score: f64,
    pub turns: Vec<LayerScores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub hatte_version: String,
    pub scenarios: usize,
    pub turns: usize,
    pub formulas: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub header: ReportHeader,
    pub overall: f64,
    pub layers: LayerMeans,
    pub by_difficulty: BTreeMap<Difficulty, f64>,
    pub by_category: BTreeMap<String, f64>,
    pub hallucination_rate: f64,
    pub tool_success_rate: f64,
    pub delegation_accuracy: f64,
    pub redundant_steps: usize,
    pub tool_usage: ToolUsage,
    pub scenarios: Vec<ScenarioScore>,
}

/// Wall-clock figures kept out of the report so it stays reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub turns: usize,
    pub mean_latency_s: f64,
    pub max_latency_s: f64,
}

impl Timing {
    pub fn from_traces(traces: &[ScenarioTrace]) -> Self {
        let lat: Vec<f64> = traces.iter().flat_map(|t| &t.turns).map(|r| r.turn.latency_s).collect();
        Timing {
            turns: lat.len(),
            mean_latency_s: mean(&lat),
            max_latency_s: lat.iter().copied().fold(0.0, f64::max),
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn formulas() -> BTreeMap<String, String> {
    [
        ("planning_fidelity", "max over reference plans of set-F1(agent step labels, reference labels)"),
        ("tool_accuracy", "matched reference calls / reference calls; a match needs tool, required params, ok result, verified read"),
        ("e2e_success", "deterministic: grounded claim within tolerance of the resolved value; rubric: token F1 vs reference text"),
        ("turn_score", "(planning_fidelity + tool_accuracy + e2e_success) / 3"),
        ("scenario_score", "mean turn_score over the scenario's turns"),
        ("overall", "mean scenario_score"),
        ("hallucination_rate", "turns with at least one ungrounded claim / turns"),
        ("tool_success_rate", "tool calls with an ok result / tool calls"),
        ("delegation_accuracy", "agent plan steps whose family matches the best reference plan at the same position / agent plan steps"),
        ("redundant_steps", "repeated (tool, params) pairs within a scenario"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .chain([("rubric_pass".to_string(), format!("token F1 >= {RUBRIC_PASS}"))])
    .collect()
}

/// Builds the report from scored scenarios, in the given order.
pub fn build_report(scored: &[(&Scenario, &ScenarioTrace, Vec<LayerScores>)]) -> Report {
    let mut scenarios = Vec::new();
    let mut all_turns: Vec<LayerScores> = Vec::new();
    let mut by_diff: BTreeMap<Difficulty, Vec<f64>> = BTreeMap::new();
    let mut by_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut usage = ToolUsage::default();
    let (mut calls, mut ok_calls) = (0usize, 0usize);
    let (mut steps, mut aligned) = (0usize, 0usize);
    let mut redundant = 0usize;

    for (sc, trace, scores) in scored {
        let score = mean(&scores.iter().map(LayerScores::mean).collect::<Vec<_>>());
        by_diff.entry(sc.difficulty).or_default().push(score);
        by_cat.entry(sc.category.clone()).or_default().push(score);
        all_turns.extend(scores.iter().copied());
        scenarios.push(ScenarioScore {
            scenario_id: sc.id.clone(),
            category: sc.category.clone(),
            difficulty: sc.difficulty,
            score,
            turns: scores.clone(),
        });

        let mut seen = BTreeSet::new();
        for rec in &trace.turns {
            let turn = &rec.turn;
            for c in &turn.tool_calls {
                calls += 1;
                ok_calls += usize::from(c.result.is_ok());
                match c.family {
                    ToolFamily::KnowledgeGet => usage.knowledge_get += 1,
                    ToolFamily::KnowledgeList => usage.knowledge_list += 1,
                    ToolFamily::SimControl => usage.sim_control += 1,
                    ToolFamily::DeployPipeline => usage.deploy_pipeline += 1,
                }
                let key = format!(
                    "{}|{}",
                    c.tool,
                    c.params.iter().map(|(k, v)| format!("{k}={}", param_string(v))).collect::<Vec<_>>().join("&")
                );
                if !seen.insert(key) {
                    redundant += 1;
                }
            }
            let labels = turn.plan.labels();
            let families: Vec<Option<ToolFamily>> = turn.plan.tool_steps().map(|s| s.tool_family).collect();
            let refs = &sc.turns[rec.turn_index].reference_plans;
            if let (_, Some(best)) = score_planning_labels(&labels, refs) {
                let ref_fam: Vec<Option<ToolFamily>> =
                    refs[best].iter().map(|l| airan_agent::tools::label_family(l)).collect();
                steps += families.len();
                aligned += families
                    .iter()
                    .enumerate()
                    .filter(|(i, f)| ref_fam.get(*i).is_some_and(|r| r == *f))
                    .count();
            }
        }
    }

    let reads = usage.knowledge_get + usage.knowledge_list;
    usage.single_fraction = if reads == 0 { 0.0 } else { usage.knowledge_get as f64 / reads as f64 };
    let n = all_turns.len();
    let layer = |f: fn(&LayerScores) -> f64| mean(&all_turns.iter().map(f).collect::<Vec<_>>());
    Report {
        header: ReportHeader {
            hatte_version: HATTE_VERSION.to_string(),
            scenarios: scenarios.len(),
            turns: n,
            formulas: formulas(),
        },
        overall: mean(&scenarios.iter().map(|s| s.score).collect::<Vec<_>>()),
        layers: LayerMeans {
            planning_fidelity: layer(|l| l.planning_fidelity),
            tool_accuracy: layer(|l| l.tool_accuracy),
            e2e_success: layer(|l| l.e2e_success),
        },
        by_difficulty: by_diff.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
        by_category: by_cat.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
        hallucination_rate: if n == 0 {
            0.0
        } else {
            all_turns.iter().filter(|l| l.hallucinated).count() as f64 / n as f64
        },
        tool_success_rate: if calls == 0 { 1.0 } else { ok_calls as f64 / calls as f64 },
        delegation_accuracy: if steps == 0 { 1.0 } else { aligned as f64 / steps as f64 },
        redundant_steps: redundant,
        tool_usage: usage,
        scenarios,
    }
}

/// Plain-text summary table.
pub fn render_table(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "HATT-E {}  scenarios={}  turns={}", r.header.hatte_version, r.header.scenarios, r.header.turns);
    let _ = writeln!(s, "{:<28}{:>10}", "metric", "value");
    let rows: [(&str, f64); 7] = [
        ("overall", r.overall),
        ("planning_fidelity", r.layers.planning_fidelity),
        ("tool_accuracy", r.layers.tool_accuracy),
        ("e2e_success", r.layers.e2e_success),
        ("hallucination_rate", r.hallucination_rate),
        ("tool_success_rate", r.tool_success_rate),
        ("delegation_accuracy", r.delegation_accuracy),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<28}{v:>10.4}");
    }
    let _ = writeln!(s, "{:<28}{:>10}", "redundant_steps", r.redundant_steps);
    let _ = writeln!(s, "{:<28}{:>10.4}", "single_entity_reads", r.tool_usage.single_fraction);
    for (d, v) in &r.by_difficulty {
        let _ = writeln!(s, "{:<28}{v:>10.4}", format!("difficulty.{d}"));
    }
    s
}
