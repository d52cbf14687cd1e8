//! Ground truth: optimal plans, exact cost-to-goal and enumeration of every
//! optimal plan on small instances.
//!
//! Everything here is a self-contained Dijkstra over the instance graph and
//! deliberately shares no code with [`crate::search`], so the two can check
//! each other.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::domains::{DomainError, Plan, PlanEdge, ProblemInstance, StateId};

/// Tolerance for comparing accumulated costs.
pub const COST_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    /// Maximum number of settled states per search.
    pub max_states: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_states: 2_000_000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("instance {0} has no plan")]
    NoPlan(String),
    #[error("oracle capacity of {limit} states exceeded on {instance}")]
    Capacity { instance: String, limit: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Exact cost-to-goal of a state, or a dead-end flag.
///
/// Serialized as a number, or the string `"deadend"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostLabel {
    Finite(f64),
    DeadEnd,
}

impl Serialize for CostLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CostLabel::Finite(v) => s.serialize_f64(*v),
            CostLabel::DeadEnd => s.serialize_str("deadend"),
        }
    }
}

impl<'de> Deserialize<'de> for CostLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "deadend" => Ok(CostLabel::DeadEnd),
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(CostLabel::Finite)
                .ok_or_else(|| serde::de::Error::custom("cost out of range")),
            other => Err(serde::de::Error::custom(format!(
                "expected a cost or \"deadend\", got {other}"
            ))),
        }
    }
}

impl CostLabel {
    pub fn finite(self) -> Option<f64> {
        match self {
            CostLabel::Finite(v) => Some(v),
            CostLabel::DeadEnd => None,
        }
    }

    pub fn is_dead_end(self) -> bool {
        matches!(self, CostLabel::DeadEnd)
    }
}

/// Map from states to their exact cost-to-goal.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostToGoalTable {
    entries: BTreeMap<StateId, CostLabel>,
}

impl CostToGoalTable {
    pub fn get(&self, s: StateId) -> Option<CostLabel> {
        self.entries.get(&s).copied()
    }

    /// Finite value, `None` for dead ends and unknown states.
    pub fn value(&self, s: StateId) -> Option<f64> {
        self.get(s).and_then(CostLabel::finite)
    }

    pub fn insert(&mut self, s: StateId, label: CostLabel) {
        self.entries.insert(s, label);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, CostLabel)> + '_ {
        self.entries.iter().map(|(&s, &l)| (s, l))
    }

    /// Largest finite value in the table (0 when there is none).
    pub fn max_finite(&self) -> f64 {
        self.entries
            .values()
            .filter_map(|l| l.finite())
            .fold(0.0, f64::max)
    }

    /// Substitute used for dead ends in regression targets: twice the largest
    /// finite value in the table.
    pub fn capped_dead_end_value(&self) -> f64 {
        2.0 * self.max_finite()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Queued {
    key: f64,
    g: f64,
    order: u64,
    state: StateId,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on key, then FIFO
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first search from `start` with consistent estimate `estimate`
/// (zero gives Dijkstra). Returns the goal and parent links, or `None` when
/// no goal is reachable.
fn best_first(
    instance: &ProblemInstance,
    start: StateId,
    estimate: &dyn Fn(StateId) -> f64,
    limits: &OracleLimits,
) -> Result<Option<(StateId, HashMap<StateId, (StateId, f64)>, f64)>, OracleError> {
    let mut dist: HashMap<StateId, f64> = HashMap::new();
    let mut parent: HashMap<StateId, (StateId, f64)> = HashMap::new();
    let mut settled: HashSet<StateId> = HashSet::new();
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    dist.insert(start, 0.0);
    heap.push(Queued {
        key: estimate(start),
        g: 0.0,
        order,
        state: start,
    });
    let mut succ = Vec::new();
    while let Some(Queued { g, state, .. }) = heap.pop() {
        if !settled.insert(state) {
            continue;
        }
        if instance.is_goal(state) {
            return Ok(Some((state, parent, g)));
        }
        if settled.len() > limits.max_states {
            return Err(OracleError::Capacity {
                instance: instance.instance_id.clone(),
                limit: limits.max_states,
            });
        }
        instance.successors_into(state, &mut succ)?;
        for &(next, cost) in &succ {
            let ng = g + cost;
            if settled.contains(&next) {
                continue;
            }
            if dist.get(&next).map_or(true, |&d| ng < d) {
                dist.insert(next, ng);
                parent.insert(next, (state, cost));
                order += 1;
                heap.push(Queued {
                    key: ng + estimate(next),
                    g: ng,
                    order,
                    state: next,
                });
            }
        }
    }
    Ok(None)
}

fn walk_back(goal: StateId, start: StateId, parent: &HashMap<StateId, (StateId, f64)>) -> Plan {
    let mut edges = Vec::new();
    let mut cur = goal;
    while cur != start {
        let (p, cost) = parent[&cur];
        edges.push(PlanEdge {
            from: p,
            to: cur,
            cost,
        });
        cur = p;
    }
    edges.reverse();
    Plan::from_edges(edges)
}

/// Cost-optimal plan by uniform-cost search.
pub fn optimal_solve(
    instance: &ProblemInstance,
    limits: &OracleLimits,
) -> Result<Plan, OracleError> {
    solve_from(instance, instance.initial_state, &|_| 0.0, limits)
}

/// Cost-optimal plan by A* with the domain's admissible estimate (uniform
/// cost when the domain has none). Same cost as [`optimal_solve`].
pub fn optimal_solve_informed(
    instance: &ProblemInstance,
    limits: &OracleLimits,
) -> Result<Plan, OracleError> {
    let est = |s: StateId| instance.admissible_estimate(s).unwrap_or(0.0);
    solve_from(instance, instance.initial_state, &est, limits)
}

fn solve_from(
    instance: &ProblemInstance,
    start: StateId,
    estimate: &dyn Fn(StateId) -> f64,
    limits: &OracleLimits,
) -> Result<Plan, OracleError> {
    match best_first(instance, start, estimate, limits)? {
        Some((goal, parent, _)) => Ok(walk_back(goal, start, &parent)),
        None => Err(OracleError::NoPlan(instance.instance_id.clone())),
    }
}

/// Exact cost-to-goal.
///
/// Domains whose state set can be enumerated get a backward uniform-cost pass
/// from all goals over the reversed graph. Otherwise, when `states` is given,
/// each listed state is solved forward on its own; without a restriction the
/// states reachable from the initial state are enumerated and treated like an
/// explicit graph.
pub fn cost_to_goal(
    instance: &ProblemInstance,
    states: Option<&[StateId]>,
    limits: &OracleLimits,
) -> Result<CostToGoalTable, OracleError> {
    let universe = match (instance.enumerate_states(), states) {
        (Some(all), _) => all,
        (None, Some(requested)) => return per_state_cost_to_goal(instance, requested, limits),
        (None, None) => reachable_states(instance, limits)?,
    };
    let full = backward_cost_to_goal(instance, &universe, limits)?;
    match states {
        None => Ok(full),
        Some(requested) => {
            let mut t = CostToGoalTable::default();
            for &s in requested {
                t.insert(s, full.get(s).unwrap_or(CostLabel::DeadEnd));
            }
            Ok(t)
        }
    }
}

fn per_state_cost_to_goal(
    instance: &ProblemInstance,
    states: &[StateId],
    limits: &OracleLimits,
) -> Result<CostToGoalTable, OracleError> {
    let est = |s: StateId| instance.admissible_estimate(s).unwrap_or(0.0);
    let mut t = CostToGoalTable::default();
    for &s in states {
        if t.get(s).is_some() {
            continue;
        }
        let label = match best_first(instance, s, &est, limits)? {
            Some((_, _, cost)) => CostLabel::Finite(cost),
            None => CostLabel::DeadEnd,
        };
        t.insert(s, label);
    }
    Ok(t)
}

/// All states reachable from the initial state.
pub fn reachable_states(
    instance: &ProblemInstance,
    limits: &OracleLimits,
) -> Result<Vec<StateId>, OracleError> {
    let mut seen = HashSet::new();
    let mut order = vec![instance.initial_state];
    seen.insert(instance.initial_state);
    let mut succ = Vec::new();
    let mut i = 0;
    while i < order.len() {
        instance.successors_into(order[i], &mut succ)?;
        for &(t, _) in &succ {
            if seen.insert(t) {
                if seen.len() > limits.max_states {
                    return Err(OracleError::Capacity {
                        instance: instance.instance_id.clone(),
                        limit: limits.max_states,
                    });
                }
                order.push(t);
            }
        }
        i += 1;
    }
    Ok(order)
}

fn backward_cost_to_goal(
    instance: &ProblemInstance,
    universe: &[StateId],
    limits: &OracleLimits,
) -> Result<CostToGoalTable, OracleError> {
    if universe.len() > limits.max_states {
        return Err(OracleError::Capacity {
            instance: instance.instance_id.clone(),
            limit: limits.max_states,
        });
    }
    let mut reverse: HashMap<StateId, Vec<(StateId, f64)>> = HashMap::new();
    let mut succ = Vec::new();
    for &s in universe {
        instance.successors_into(s, &mut succ)?;
        for &(t, c) in &succ {
            reverse.entry(t).or_default().push((s, c));
        }
    }
    let mut dist: HashMap<StateId, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for &s in universe {
        if instance.is_goal(s) {
            dist.insert(s, 0.0);
            heap.push(Reverse((OrdF64(0.0), s)));
        }
    }
    let mut done = HashSet::new();
    while let Some(Reverse((OrdF64(d), s))) = heap.pop() {
        if !done.insert(s) {
            continue;
        }
        for &(p, c) in reverse.get(&s).map(Vec::as_slice).unwrap_or(&[]) {
            let nd = d + c;
            if dist.get(&p).map_or(true, |&old| nd < old) {
                dist.insert(p, nd);
                heap.push(Reverse((OrdF64(nd), p)));
            }
        }
    }
    let mut t = CostToGoalTable::default();
    for &s in universe {
        t.insert(
            s,
            dist.get(&s)
                .map_or(CostLabel::DeadEnd, |&d| CostLabel::Finite(d)),
        );
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Result of [`enumerate_optimal_plans`].
#[derive(Clone, Debug)]
pub struct PlanEnumeration {
    pub plans: Vec<Plan>,
    pub optimal_cost: f64,
    /// More than `limit` optimal plans exist; only the first `limit` are kept.
    pub truncated: bool,
}

/// Every distinct optimal plan, up to `limit`, in depth-first order following
/// the domain's successor order.
///
/// Plans end at the first goal they reach. Only edges with
/// `g(s) + w(s, s') + h*(s') = f*` are followed, where `g` is the optimal
/// distance from the start.
pub fn enumerate_optimal_plans(
    instance: &ProblemInstance,
    limit: usize,
    limits: &OracleLimits,
) -> Result<PlanEnumeration, OracleError> {
    let start = instance.initial_state;
    // Forward distances for every state with g <= f*.
    let mut dist: HashMap<StateId, f64> = HashMap::new();
    let mut settled: Vec<StateId> = Vec::new();
    let mut done = HashSet::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0.0);
    heap.push(Reverse((OrdF64(0.0), 0u64, start)));
    let mut f_star: Option<f64> = None;
    let mut succ = Vec::new();
    let mut order = 0u64;
    while let Some(Reverse((OrdF64(d), _, s))) = heap.pop() {
        if let Some(f) = f_star {
            if d > f + COST_EPS {
                break;
            }
        }
        if !done.insert(s) {
            continue;
        }
        settled.push(s);
        if done.len() > limits.max_states {
            return Err(OracleError::Capacity {
                instance: instance.instance_id.clone(),
                limit: limits.max_states,
            });
        }
        if instance.is_goal(s) {
            f_star.get_or_insert(d);
            continue;
        }
        instance.successors_into(s, &mut succ)?;
        for &(t, c) in &succ {
            let nd = d + c;
            if dist.get(&t).map_or(true, |&old| nd < old) {
                dist.insert(t, nd);
                order += 1;
                heap.push(Reverse((OrdF64(nd), order, t)));
            }
        }
    }
    let f_star = f_star.ok_or_else(|| OracleError::NoPlan(instance.instance_id.clone()))?;

    // Shortest-path DAG restricted to settled states, deduplicated per target.
    let mut dag: HashMap<StateId, Vec<(StateId, f64)>> = HashMap::new();
    for &s in &settled {
        if instance.is_goal(s) {
            continue;
        }
        instance.successors_into(s, &mut succ)?;
        let mut out: Vec<(StateId, f64)> = Vec::new();
        for &(t, c) in &succ {
            let on_dag = done.contains(&t) && (dist[&s] + c - dist[&t]).abs() <= COST_EPS;
            if on_dag && !out.iter().any(|&(u, _)| u == t) {
                out.push((t, c));
            }
        }
        dag.insert(s, out);
    }
    // States from which an optimal goal is reachable inside the DAG.
    let mut useful: HashSet<StateId> = settled
        .iter()
        .copied()
        .filter(|&s| instance.is_goal(s) && (dist[&s] - f_star).abs() <= COST_EPS)
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &s in settled.iter().rev() {
            if useful.contains(&s) {
                continue;
            }
            if dag
                .get(&s)
                .is_some_and(|out| out.iter().any(|(t, _)| useful.contains(t)))
            {
                useful.insert(s);
                changed = true;
            }
        }
    }

    let mut plans = Vec::new();
    let mut truncated = false;
    if useful.contains(&start) {
        let mut path: Vec<PlanEdge> = Vec::new();
        let mut on_path: HashSet<StateId> = HashSet::from([start]);
        dfs(
            instance,
            start,
            &dag,
            &useful,
            &mut path,
            &mut on_path,
            &mut plans,
            limit,
            &mut truncated,
        );
    }
    Ok(PlanEnumeration {
        plans,
        optimal_cost: f_star,
        truncated,
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    instance: &ProblemInstance,
    s: StateId,
    dag: &HashMap<StateId, Vec<(StateId, f64)>>,
    useful: &HashSet<StateId>,
    path: &mut Vec<PlanEdge>,
    on_path: &mut HashSet<StateId>,
    plans: &mut Vec<Plan>,
    limit: usize,
    truncated: &mut bool,
) {
    if *truncated {
        return;
    }
    if instance.is_goal(s) {
        if plans.len() == limit {
            *truncated = true;
        } else {
            plans.push(Plan::from_edges(path.clone()));
        }
        return;
    }
    for &(t, c) in dag.get(&s).map(Vec::as_slice).unwrap_or(&[]) {
        if !useful.contains(&t) || on_path.contains(&t) {
            continue;
        }
        path.push(PlanEdge {
            from: s,
            to: t,
            cost: c,
        });
        on_path.insert(t);
        dfs(
            instance, t, dag, useful, path, on_path, plans, limit, truncated,
        );
        on_path.remove(&t);
        path.pop();
    }
}
