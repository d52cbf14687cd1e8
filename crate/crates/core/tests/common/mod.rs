//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use heurank::domains::{Plan, ProblemInstance, StateId};
use heurank::losses::{evaluate_loss, LossBatch, LossKind};
use heurank::models::HeuristicModel;
use heurank::trace::{RecordSet, TrainingRecord};

/// Open lists of the path-only replay from the closed form
/// `O_i = (N(s_0) ∪ .. ∪ N(s_{i-1})) \ {s_0 .. s_i, s_l}` with the cheapest `g`
/// through any expanded path state. Index `i - 1` holds step `i`.
pub fn brute_force_open_lists(
    instance: &ProblemInstance,
    plan: &Plan,
) -> Vec<BTreeMap<StateId, f64>> {
    let path = plan.states(instance.initial_state);
    let mut g_path = vec![0.0];
    for e in &plan.edges {
        g_path.push(g_path.last().unwrap() + e.cost);
    }
    let goal = *path.last().unwrap();
    let mut steps = Vec::new();
    for i in 1..path.len() {
        let mut open: BTreeMap<StateId, f64> = BTreeMap::new();
        for k in 0..i {
            for (t, w) in instance.successors(path[k]).unwrap() {
                let g = g_path[k] + w;
                let e = open.entry(t).or_insert(f64::INFINITY);
                if g < *e {
                    *e = g;
                }
            }
        }
        for s in &path[..=i] {
            open.remove(s);
        }
        open.remove(&goal);
        steps.push(open);
    }
    steps
}

/// Violated ranking pairs counted straight from the closed-form Open lists.
pub fn brute_force_violations(
    instance: &ProblemInstance,
    plan: &Plan,
    h: &HashMap<StateId, f64>,
    alpha: f64,
    beta: f64,
    steps: usize,
) -> usize {
    let path = plan.states(instance.initial_state);
    let mut g = 0.0;
    let mut count = 0;
    for (i, open) in brute_force_open_lists(instance, plan)
        .iter()
        .enumerate()
        .take(steps)
    {
        g += plan.edges[i].cost;
        let s_i = path[i + 1];
        let f_i = alpha * g + beta * h[&s_i];
        for (s_j, &g_j) in open {
            if f_i >= alpha * g_j + beta * h[s_j] {
                count += 1;
            }
        }
    }
    count
}

fn loss_at(kind: LossKind, model: &HeuristicModel, set: &RecordSet, alpha: f64, beta: f64) -> f64 {
    let cache = model
        .forward(
            &set.instance_id,
            set.states.iter().map(|e| (e.state, e.features.as_slice())),
        )
        .unwrap();
    evaluate_loss(
        kind,
        &LossBatch {
            records: &set.records,
            h: &cache.values,
            alpha,
            beta,
        },
    )
    .unwrap()
    .value
}

/// Largest relative error between backpropagated and finite-difference
/// parameter gradients, using a fourth-order central stencil.
pub fn fd_max_relative_error(
    kind: LossKind,
    model: &HeuristicModel,
    set: &RecordSet,
    alpha: f64,
    beta: f64,
) -> f64 {
    let cache = model
        .forward(
            &set.instance_id,
            set.states.iter().map(|e| (e.state, e.features.as_slice())),
        )
        .unwrap();
    let out = evaluate_loss(
        kind,
        &LossBatch {
            records: &set.records,
            h: &cache.values,
            alpha,
            beta,
        },
    )
    .unwrap();
    let analytic = model.backprop(&cache, &out.grad).unwrap();
    let base = model.params().to_vec();
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let at = |delta: f64| {
            let mut m = model.clone();
            let mut p = base.clone();
            p[k] += delta;
            m.set_params(p).unwrap();
            loss_at(kind, &m, set, alpha, beta)
        };
        let numeric =
            (-at(2.0 * step) + 8.0 * at(step) - 8.0 * at(-step) + at(-2.0 * step)) / (12.0 * step);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// Distance of the Bellman-residual loss from its nearest kink: hinge
/// arguments at zero or a tie between the two best children.
pub fn lbe_kink_margin(set: &RecordSet, h: &HashMap<StateId, f64>) -> f64 {
    let mut margin = f64::INFINITY;
    for r in &set.records {
        if let TrainingRecord::ParentChildren {
            state,
            h_star,
            children,
        } = r
        {
            let hs = h[state];
            margin = margin
                .min((hs - h_star).abs())
                .min((hs - 2.0 * h_star).abs());
            let mut hc: Vec<f64> = children.iter().map(|c| h[c]).collect();
            hc.sort_by(f64::total_cmp);
            if let Some(&best) = hc.first() {
                margin = margin.min((1.0 + best - hs).abs());
            }
            if hc.len() > 1 {
                margin = margin.min(hc[1] - hc[0]);
            }
        }
    }
    margin
}
