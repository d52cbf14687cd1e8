mod common;

use std::collections::{BTreeMap, HashMap};

use heurank::domains::{
    fixtures, generate_instance, DomainParams, DomainTag, ProblemInstance, StateId,
};
use heurank::losses::{loss_l01, LossBatch, LossKind};
use heurank::oracle::{self, OracleLimits};
use heurank::trace::{ranking_trace, PairScope, RecordOptions};
use proptest::prelude::*;

fn instance(tag: DomainTag, seed: u64) -> ProblemInstance {
    let params = match tag {
        DomainTag::MazeTeleport => DomainParams::sized(7),
        _ => DomainParams::default(),
    };
    generate_instance(tag, &params, seed).unwrap()
}

fn domains() -> impl Strategy<Value = DomainTag> {
    prop_oneof![
        Just(DomainTag::ExplicitGraph),
        Just(DomainTag::MazeTeleport),
        Just(DomainTag::SokobanLite),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn steps_match_the_closed_form(tag in domains(), seed in 0u64..5_000, pick in 0usize..8) {
        let inst = instance(tag, seed);
        let plans = oracle::enumerate_optimal_plans(&inst, 8, &OracleLimits::default()).unwrap().plans;
        let plan = &plans[pick % plans.len()];
        let t = ranking_trace(&inst, plan).unwrap();
        let expected = common::brute_force_open_lists(&inst, plan);
        prop_assert_eq!(t.steps.len(), expected.len());
        for (step, want) in t.steps.iter().zip(&expected) {
            let got: BTreeMap<StateId, f64> = step.off_path.iter().copied().collect();
            prop_assert_eq!(got.len(), step.off_path.len(), "duplicate rivals");
            prop_assert_eq!(&got, want);
        }
        let all: usize = expected.iter().map(|o| o.len()).sum();
        prop_assert_eq!(t.pair_count(PairScope::AllSteps), all);
        prop_assert_eq!(
            t.pair_count(PairScope::BeforeGoal),
            all - expected.last().map_or(0, |o| o.len())
        );
    }

    #[test]
    fn l01_matches_brute_force_counts(seed in 0u64..5_000, hseed in 0u64..1_000, alpha in prop_oneof![Just(0.0), Just(1.0), 0.0f64..2.0]) {
        let inst = instance(DomainTag::MazeTeleport, seed);
        let plan = oracle::optimal_solve(&inst, &OracleLimits::default()).unwrap();
        let t = ranking_trace(&inst, &plan).unwrap();
        let h: HashMap<StateId, f64> = inst
            .enumerate_states()
            .unwrap()
            .into_iter()
            .map(|s| (s, ((s.0 as u64).wrapping_mul(hseed + 1) % 7) as f64))
            .collect();
        for scope in [PairScope::AllSteps, PairScope::BeforeGoal] {
            let opts = RecordOptions { pair_scope: scope, ..Default::default() };
            let set = t.training_records(LossKind::Lstar, &opts).unwrap();
            let ours = loss_l01(&LossBatch { records: &set.records, h: &h, alpha, beta: 1.0 }, false).unwrap();
            let steps = match scope {
                PairScope::AllSteps => plan.length(),
                PairScope::BeforeGoal => plan.length().saturating_sub(1),
            };
            prop_assert_eq!(ours, common::brute_force_violations(&inst, &plan, &h, alpha, 1.0, steps));
        }
    }
}

#[test]
fn search_tree_fixture_pairs() {
    let inst = fixtures::ranking_tree();
    let plan = oracle::optimal_solve(&inst, &OracleLimits::default()).unwrap();
    let t = ranking_trace(&inst, &plan).unwrap();
    assert_eq!(t.pair_count(PairScope::BeforeGoal), 6);
    assert_eq!(t.pair_count(PairScope::AllSteps), 10);
    let open = common::brute_force_open_lists(&inst, &plan);
    let sizes: Vec<usize> = open.iter().map(|o| o.len()).collect();
    assert_eq!(sizes, [2, 4, 4]);
}

#[test]
fn traces_survive_serialization() {
    let inst = instance(DomainTag::SokobanLite, 4);
    let plan = oracle::optimal_solve(&inst, &OracleLimits::default()).unwrap();
    let t = ranking_trace(&inst, &plan).unwrap();
    let mut back: heurank::trace::RankingTrace =
        serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    back.reindex();
    assert_eq!(back.steps, t.steps);
    for kind in [LossKind::Lstar, LossKind::Lrt] {
        assert_eq!(
            back.training_records(kind, &RecordOptions::default())
                .unwrap(),
            t.training_records(kind, &RecordOptions::default()).unwrap()
        );
    }
}
