use std::sync::{Arc, LazyLock};

use airan_agent::{HeuristicBackend, StepClock};
use airan_agent::session::Clock;
use airan_eval::runner::{evaluate, run_suite};
use airan_eval::score::{score_planning_labels, set_f1, token_f1};
use airan_eval::suite::builtin_scenarios;
use airan_eval::report::build_report;
use airan_eval::{LayerScores, Scenario, ScenarioTrace, TokenF1Judge};
use proptest::prelude::*;

static RUN: LazyLock<(Vec<Scenario>, Vec<ScenarioTrace>)> = LazyLock::new(|| {
    let sc = builtin_scenarios();
    let clock = || -> Arc<dyn Clock> { Arc::new(StepClock::new(100)) };
    let traces = run_suite(&sc, Arc::new(HeuristicBackend), Some(&clock)).unwrap();
    (sc, traces)
});

fn label() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["knowledge_get:cell_kpi", "knowledge_get:ue_status", "knowledge_list:cell_all", "sim_control:sim_advance", "deploy_pipeline:profile_services"])
        .prop_map(str::to_string)
}

proptest! {
    #[test]
    fn f1_is_bounded_and_symmetric(a in prop::collection::vec(label(), 0..5), b in prop::collection::vec(label(), 0..5)) {
        let f = set_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - set_f1(&b, &a)).abs() < 1e-12);
        prop_assert_eq!(set_f1(&a, &a), 1.0);
    }

    #[test]
    fn adding_reference_plans_never_lowers_planning(
        agent in prop::collection::vec(label(), 0..4),
        plans in prop::collection::vec(prop::collection::vec(label(), 1..4), 1..4),
        extra in prop::collection::vec(label(), 1..4),
    ) {
        let before = score_planning_labels(&agent, &plans).0;
        let mut more = plans.clone();
        more.push(extra);
        prop_assert!(score_planning_labels(&agent, &more).0 >= before);
    }

    #[test]
    fn token_f1_is_bounded(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
        let f = token_f1(&a, &b);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn report_ignores_trace_order(seed in any::<u64>()) {
        let (sc, traces) = &*RUN;
        let mut shuffled = traces.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = evaluate(sc, traces, &TokenF1Judge).unwrap();
        let b = evaluate(sc, &shuffled, &TokenF1Judge).unwrap();
        prop_assert!((a.overall - b.overall).abs() < 1e-12);
        prop_assert_eq!(a.by_difficulty.len(), b.by_difficulty.len());
        for (k, v) in &a.by_category {
            prop_assert!((v - b.by_category[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn scenario_scores_are_isolated(i in 0usize..50, j in 0usize..50) {
        let (sc, traces) = &*RUN;
        let whole = evaluate(sc, traces, &TokenF1Judge).unwrap();
        let pair: Vec<ScenarioTrace> = [i, j].iter().map(|&k| traces[k].clone()).collect();
        let part = evaluate(sc, &pair, &TokenF1Judge).unwrap();
        prop_assert_eq!(&part.scenarios[0], &whole.scenarios[i]);
        prop_assert_eq!(&part.scenarios[1], &whole.scenarios[j]);
        for s in &whole.scenarios {
            prop_assert!((0.0..=1.0).contains(&s.score));
        }
    }
}

#[test]
fn f1_anchor_values() {
    assert!((set_f1(&["a"], &["a", "b"]) - 0.667).abs() < 1e-3);
    let r = "alpha bravo charlie delta echo foxtrot golf hotel";
    assert!((token_f1("alpha bravo charlie delta echo foxtrot kilo lima", r) - 0.75).abs() < 1e-12);
}

#[test]
fn overall_is_the_mean_of_scenario_scores() {
    let (sc, traces) = &*RUN;
    let scores = [0.7933, 0.6428, 0.5971];
    let scored: Vec<_> = (0..3)
        .map(|k| {
            let l = LayerScores { planning_fidelity: scores[k], tool_accuracy: scores[k], e2e_success: scores[k], hallucinated: false };
            (&sc[k], &traces[k], vec![l; traces[k].turns.len()])
        })
        .collect();
    let r = build_report(&scored);
    assert!((r.overall - 0.6777).abs() < 5e-5, "{}", r.overall);
}
