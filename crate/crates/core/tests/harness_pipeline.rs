use std::collections::{HashMap, HashSet};

use heurank::domains::{generate_instance, DomainParams, DomainTag, ProblemInstance};
use heurank::harness::io::csv_string;
use heurank::harness::{
    aggregate, compare_losses, prepare, report_tables, split, CompareConfig, Comparison, EvalRow,
    Prepared,
};
use heurank::losses::LossKind;
use heurank::models::ModelSpec;
use heurank::optim::{EarlyStop, OptimizerConfig, TrainConfig};
use heurank::oracle::OracleLimits;
use heurank::search::{SearchConfig, SearchStatus};
use heurank::trace::RecordOptions;
use proptest::prelude::*;

fn mazes(n: u64, size: u32, seed0: u64) -> Vec<ProblemInstance> {
    (0..n)
        .map(|k| {
            generate_instance(
                DomainTag::MazeTeleport,
                &DomainParams::sized(size),
                seed0 + k,
            )
            .unwrap()
        })
        .collect()
}

fn config(losses: Vec<LossKind>, spec: ModelSpec, train: TrainConfig) -> CompareConfig {
    CompareConfig {
        losses,
        searches: vec![
            ("astar".into(), SearchConfig::astar()),
            ("gbfs".into(), SearchConfig::gbfs()),
        ],
        model_spec: spec,
        model_seed: 4,
        train,
        record_options: RecordOptions::default(),
        budget: 2_000,
    }
}

fn run_maze_comparison() -> (Comparison, String) {
    let all = mazes(50, 8, 300);
    let s = split(all.len(), 9);
    let pick = |idx: &[usize]| idx.iter().map(|&i| all[i].clone()).collect::<Vec<_>>();
    let limits = OracleLimits::default();
    let train_set = prepare(&pick(&s.train), true, &limits).unwrap();
    let validation = prepare(&pick(&s.validation), true, &limits).unwrap();
    let mut train = TrainConfig::new(LossKind::Lstar);
    train.optimizer = OptimizerConfig::adam(1e-2);
    train.epochs = 15;
    train.seed = 2;
    train.early_stop = Some(EarlyStop { patience: 5 });
    let d = all[0].feature_dim();
    let cfg = config(
        vec![LossKind::Lstar, LossKind::L2],
        ModelSpec::linear(d),
        train,
    );
    let cmp = compare_losses(&train_set, &validation, &pick(&s.test), &cfg).unwrap();
    let mut text = csv_string(&cmp.rows).unwrap();
    for (_, r) in &cmp.reports {
        text.push_str(&r.to_csv(false));
    }
    for (_, m) in &cmp.models {
        text.push_str(&m.to_json());
    }
    for t in report_tables(&cmp.rows) {
        text.push_str(&t.to_csv());
    }
    (cmp, text)
}

#[test]
fn maze_comparison_is_reproducible() {
    let (cmp, first) = run_maze_comparison();
    let (_, second) = run_maze_comparison();
    assert_eq!(first, second);
    assert_eq!(cmp.metrics.len(), 4);
    assert!(cmp.metrics.iter().all(|m| m.instances == 13));
}

#[test]
fn perfectly_ranked_toy_set_expands_only_the_plan() {
    let instances = mazes(10, 6, 40);
    let prepared: Vec<Prepared> = prepare(&instances, false, &OracleLimits::default()).unwrap();
    let mut train = TrainConfig::new(LossKind::Lstar);
    train.optimizer = OptimizerConfig::adam(0.1);
    train.epochs = 1_000;
    train.l01_target = Some(0);
    let mut cfg = config(vec![LossKind::Lstar], ModelSpec::tabular(), train);
    cfg.searches.truncate(1);
    let cmp = compare_losses(&prepared, &[], &instances, &cfg).unwrap();
    assert_eq!(cmp.reports[0].1.final_l01(), Some(0));
    let m = &cmp.metrics[0];
    assert_eq!(m.solved_fraction, 100.0);
    assert_eq!(m.avg_expanded, m.avg_plan_length);

    let [solved, _, _] = report_tables(&cmp.rows);
    assert_eq!(solved.header, ["problem", "complexity", "astar:lstar"]);
    assert_eq!(solved.rows, [["maze_teleport", "6", "100.0"]]);
}

fn rows_strategy() -> impl Strategy<Value = Vec<EvalRow>> {
    let cell = (any::<bool>(), 1u64..500, 1usize..60);
    prop::collection::vec(prop::collection::vec(cell, 6), 1..4).prop_map(|columns| {
        let mut rows = Vec::new();
        for (c, col) in columns.iter().enumerate() {
            for (i, &(solved, expanded, len)) in col.iter().enumerate() {
                rows.push(EvalRow {
                    search: if c % 2 == 0 { "astar" } else { "gbfs" }.into(),
                    model: format!("m{c}"),
                    instance_id: format!("x-5-s{i}"),
                    status: if solved {
                        SearchStatus::Solved
                    } else {
                        SearchStatus::BudgetExhausted
                    },
                    expanded,
                    generated: expanded * 2,
                    plan_length: solved.then_some(len),
                    cost: solved.then_some(len as f64),
                });
            }
        }
        rows
    })
}

proptest! {
    #[test]
    fn summaries_recompute_from_rows(rows in rows_strategy()) {
        let metrics = aggregate(&rows);
        let mut by_col: HashMap<(String, String), Vec<&EvalRow>> = HashMap::new();
        for r in &rows {
            by_col.entry((r.search.clone(), r.model.clone())).or_default().push(r);
        }
        let common: HashSet<&str> = rows
            .iter()
            .map(|r| r.instance_id.as_str())
            .filter(|id| by_col.values().all(|col| col.iter().any(|r| r.instance_id == *id && r.solved())))
            .collect();
        prop_assert_eq!(metrics.len(), by_col.len());
        for m in &metrics {
            let col = &by_col[&(m.search.clone(), m.model.clone())];
            let solved = col.iter().filter(|r| r.solved()).count();
            prop_assert!((0.0..=100.0).contains(&m.solved_fraction));
            prop_assert_eq!(m.solved, solved);
            prop_assert_eq!(m.solved_fraction, 100.0 * solved as f64 / col.len() as f64);
            prop_assert_eq!(m.common_solved, common.len());
            let in_common: Vec<&&EvalRow> = col.iter().filter(|r| common.contains(r.instance_id.as_str())).collect();
            if in_common.is_empty() {
                prop_assert_eq!(m.avg_plan_length, None);
            } else {
                let n = in_common.len() as f64;
                let len: f64 = in_common.iter().map(|r| r.plan_length.unwrap() as f64).sum::<f64>() / n;
                let exp: f64 = in_common.iter().map(|r| r.expanded as f64).sum::<f64>() / n;
                prop_assert!((m.avg_plan_length.unwrap() - len).abs() < 1e-9);
                prop_assert!((m.avg_expanded.unwrap() - exp).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn summaries_ignore_row_order(rows in rows_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let key = |mut m: Vec<heurank::harness::EvalMetrics>| {
            m.sort_by(|a, b| (&a.search, &a.model).cmp(&(&b.search, &b.model)));
            m
        };
        let a = key(aggregate(&rows));
        let b = key(aggregate(&shuffled));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.solved, y.solved);
            prop_assert_eq!(x.common_solved, y.common_solved);
            prop_assert!((x.avg_plan_length.unwrap_or(0.0) - y.avg_plan_length.unwrap_or(0.0)).abs() < 1e-9);
            prop_assert!((x.avg_expanded.unwrap_or(0.0) - y.avg_expanded.unwrap_or(0.0)).abs() < 1e-9);
        }
    }
}
