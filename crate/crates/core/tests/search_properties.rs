use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use heurank::domains::{generate_instance, DomainParams, DomainTag, ProblemInstance, StateId};
use heurank::oracle::{self, OracleLimits};
use heurank::search::{forward_search, DomainEstimate, SearchConfig, TiePolicy, ZeroHeuristic};
use proptest::prelude::*;

/// Distances from the initial state, by a textbook Dijkstra over integer
/// milli-costs (all generated costs are multiples of 1e-3 or integers).
fn distances_from_start(inst: &ProblemInstance) -> HashMap<StateId, f64> {
    let mut dist: HashMap<StateId, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, inst.initial_state)));
    while let Some(Reverse((d, s))) = heap.pop() {
        if dist.contains_key(&s) {
            continue;
        }
        dist.insert(s, d as f64 / 1000.0);
        for (t, w) in inst.successors(s).unwrap() {
            if !dist.contains_key(&t) {
                heap.push(Reverse((d + (w * 1000.0).round() as u64, t)));
            }
        }
    }
    dist
}

fn instance(tag: DomainTag, seed: u64) -> ProblemInstance {
    let params = match tag {
        DomainTag::MazeTeleport => DomainParams::sized(9),
        DomainTag::OnewayGrid => DomainParams::sized(2 + (seed % 6) as u32),
        _ => DomainParams::default(),
    };
    generate_instance(tag, &params, seed).unwrap()
}

fn small_domains() -> impl Strategy<Value = DomainTag> {
    prop_oneof![
        Just(DomainTag::ExplicitGraph),
        Just(DomainTag::MazeTeleport),
        Just(DomainTag::SokobanLite),
        Just(DomainTag::OnewayGrid),
    ]
}

fn ties() -> impl Strategy<Value = TiePolicy> {
    prop_oneof![
        Just(TiePolicy::Lifo),
        Just(TiePolicy::Fifo),
        Just(TiePolicy::LowerG),
        Just(TiePolicy::HigherG),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn uniform_cost_matches_the_oracle(tag in small_domains(), seed in 0u64..10_000, tie in ties()) {
        let inst = instance(tag, seed);
        let cfg = SearchConfig::astar().with_tie_policy(tie).with_budget(u64::MAX);
        let r = forward_search(&inst, &ZeroHeuristic, &cfg).unwrap();
        let best = oracle::optimal_solve(&inst, &OracleLimits::default()).unwrap();
        prop_assert!(r.is_solved());
        prop_assert!((r.cost().unwrap() - best.total_cost).abs() < 1e-9);
        prop_assert!(heurank::search::validate_plan(&inst, r.plan.as_ref().unwrap()));
    }

    #[test]
    fn consistent_astar_never_reopens_and_has_monotone_f(tag in small_domains(), seed in 0u64..10_000) {
        let inst = instance(tag, seed);
        let h_star = oracle::cost_to_goal(&inst, None, &OracleLimits::default()).unwrap();
        let r = forward_search(&inst, &h_star, &SearchConfig::astar().with_budget(u64::MAX)).unwrap();
        prop_assert_eq!(r.reopened_count, 0);
        for w in r.expansion_f.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9, "f decreased: {:?}", w);
        }
    }

    #[test]
    fn closed_g_values_are_shortest_distances(tag in small_domains(), seed in 0u64..10_000) {
        let inst = instance(tag, seed);
        let dist = distances_from_start(&inst);
        let h: &dyn heurank::search::Heuristic = if tag == DomainTag::MazeTeleport || tag == DomainTag::OnewayGrid {
            &DomainEstimate
        } else {
            &ZeroHeuristic
        };
        let r = forward_search(&inst, h, &SearchConfig::astar().with_budget(u64::MAX)).unwrap();
        for (s, g) in r.expansion_order.iter().zip(&r.expansion_g) {
            prop_assert!((dist[s] - g).abs() < 1e-9, "state {} g {} vs {}", s, g, dist[s]);
        }
    }

    #[test]
    fn searches_are_deterministic(tag in small_domains(), seed in 0u64..10_000, alpha in 0.0f64..2.0) {
        let inst = instance(tag, seed);
        let cfg = SearchConfig::custom(alpha, 1.0).with_budget(5_000);
        let a = forward_search(&inst, &DomainEstimate, &cfg).unwrap();
        let b = forward_search(&inst, &DomainEstimate, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn budget_bounds_expansions(tag in small_domains(), seed in 0u64..10_000, budget in 0u64..40) {
        let inst = instance(tag, seed);
        let r = forward_search(&inst, &ZeroHeuristic, &SearchConfig::astar().with_budget(budget)).unwrap();
        prop_assert!(r.expanded_count <= budget);
        prop_assert_eq!(r.expanded_count as usize, r.expansion_order.len());
    }
}

#[test]
fn uniform_cost_on_puzzles_matches_the_oracle() {
    for seed in 0..5 {
        let inst =
            generate_instance(DomainTag::SlidingPuzzle, &DomainParams::sized(3), seed).unwrap();
        let best = oracle::optimal_solve(&inst, &OracleLimits::default()).unwrap();
        let manhattan = forward_search(&inst, &DomainEstimate, &SearchConfig::astar()).unwrap();
        assert_eq!(manhattan.cost(), Some(best.total_cost));
        assert_eq!(manhattan.reopened_count, 0);
    }
}
