//! Best-first forward search with merit `f = alpha * g + beta * h`.
//!
//! A* is `alpha = beta = 1`, greedy best-first is `alpha = 0, beta = 1`. The
//! goal test happens when a state is popped, every generated state is
//! remembered (full duplicate detection) and closed states are reopened only
//! when [`Reopening::Enabled`] and a strictly cheaper path turns up.
//!
//! The Open list is a binary heap with lazy deletion: an improved state gets a
//! fresh entry and the old one is skipped when popped. Counts match an eager
//! decrease-key.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domains::{DomainError, Plan, PlanEdge, ProblemInstance, StateId};
use crate::oracle::{CostToGoalTable, COST_EPS};

/// Default expansion budget.
pub const DEFAULT_EXPANSION_BUDGET: u64 = 100_000;

#[derive(Debug, thiserror::Error)]
#[error("heuristic evaluation failed: {0}")]
pub struct HeuristicError(pub String);

impl From<DomainError> for HeuristicError {
    fn from(e: DomainError) -> Self {
        HeuristicError(e.to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error("certification inconclusive on {instance}: search ended with status {status}")]
    Inconclusive {
        instance: String,
        status: SearchStatus,
    },
}

/// A heuristic evaluator. Implementations must be pure: the same state always
/// gets the same value.
pub trait Heuristic: Sync {
    fn h(&self, instance: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError>;
}

impl<F> Heuristic for F
where
    F: Fn(&ProblemInstance, StateId) -> f64 + Sync,
{
    fn h(&self, instance: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError> {
        Ok(self(instance, s))
    }
}

/// `h = 0` everywhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroHeuristic;

impl Heuristic for ZeroHeuristic {
    fn h(&self, _: &ProblemInstance, _: StateId) -> Result<f64, HeuristicError> {
        Ok(0.0)
    }
}

/// Looks states up in a map, falling back to `default`.
#[derive(Clone, Debug, Default)]
pub struct TableHeuristic {
    pub values: HashMap<StateId, f64>,
    pub default: f64,
}

impl TableHeuristic {
    pub fn new(values: HashMap<StateId, f64>) -> Self {
        TableHeuristic {
            values,
            default: 0.0,
        }
    }
}

impl Heuristic for TableHeuristic {
    fn h(&self, _: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError> {
        Ok(self.values.get(&s).copied().unwrap_or(self.default))
    }
}

/// Exact cost-to-goal; dead ends and missing states get `+inf`.
impl Heuristic for CostToGoalTable {
    fn h(&self, _: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError> {
        Ok(self.value(s).unwrap_or(f64::INFINITY))
    }
}

/// The per-node reference values bundled with explicit-graph fixtures.
#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceHeuristic;

impl Heuristic for ReferenceHeuristic {
    fn h(&self, instance: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError> {
        match &instance.payload {
            crate::domains::Payload::ExplicitGraph(g) => g
                .reference_h_of(s)
                .ok_or_else(|| HeuristicError(format!("no reference value for state {s}"))),
            _ => Err(HeuristicError(format!(
                "{} instances carry no reference values",
                instance.domain_tag().as_str()
            ))),
        }
    }
}

/// The domain's admissible estimate (Manhattan-style), 0 where none exists.
#[derive(Clone, Copy, Debug, Default)]
pub struct DomainEstimate;

impl Heuristic for DomainEstimate {
    fn h(&self, instance: &ProblemInstance, s: StateId) -> Result<f64, HeuristicError> {
        Ok(instance.admissible_estimate(s).unwrap_or(0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reopening {
    Enabled,
    Disabled,
}

/// How equal-merit Open entries are ordered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Most recently generated first.
    #[default]
    Lifo,
    /// Least recently generated first.
    Fifo,
    /// Smaller g first, then most recent.
    LowerG,
    /// Larger g first, then most recent.
    HigherG,
}

impl std::str::FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lifo" => Ok(TiePolicy::Lifo),
            "fifo" => Ok(TiePolicy::Fifo),
            "lower_g" => Ok(TiePolicy::LowerG),
            "higher_g" => Ok(TiePolicy::HigherG),
            other => Err(format!("unknown tie policy `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub alpha: f64,
    pub beta: f64,
    pub reopening: Reopening,
    pub tie_policy: TiePolicy,
    pub expansion_budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_budget: Option<u64>,
    /// Wall-clock cap in seconds. Results then depend on machine speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds_budget: Option<f64>,
}

impl SearchConfig {
    pub fn astar() -> Self {
        SearchConfig {
            alpha: 1.0,
            beta: 1.0,
            reopening: Reopening::Enabled,
            tie_policy: TiePolicy::default(),
            expansion_budget: DEFAULT_EXPANSION_BUDGET,
            generated_budget: None,
            seconds_budget: None,
        }
    }

    pub fn gbfs() -> Self {
        SearchConfig {
            alpha: 0.0,
            beta: 1.0,
            reopening: Reopening::Disabled,
            ..Self::astar()
        }
    }

    /// General merit; reopening follows A* when `alpha > 0`.
    pub fn custom(alpha: f64, beta: f64) -> Self {
        SearchConfig {
            alpha,
            beta,
            reopening: if alpha > 0.0 {
                Reopening::Enabled
            } else {
                Reopening::Disabled
            },
            ..Self::astar()
        }
    }

    pub fn with_tie_policy(mut self, tie_policy: TiePolicy) -> Self {
        self.tie_policy = tie_policy;
        self
    }

    pub fn with_budget(mut self, expansion_budget: u64) -> Self {
        self.expansion_budget = expansion_budget;
        self
    }

    pub fn with_reopening(mut self, reopening: Reopening) -> Self {
        self.reopening = reopening;
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.alpha) || !ok(self.beta) {
            return Err(SearchError::InvalidConfig(format!(
                "alpha and beta must be finite and >= 0 (got {}, {})",
                self.alpha, self.beta
            )));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(SearchError::InvalidConfig(
                "alpha + beta must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Solved,
    BudgetExhausted,
    ExhaustedOpen,
}

impl fmt::Display for SearchStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchStatus::Solved => "solved",
            SearchStatus::BudgetExhausted => "budget_exhausted",
            SearchStatus::ExhaustedOpen => "exhausted_open",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub status: SearchStatus,
    pub plan: Option<Plan>,
    /// Popped non-goal states. The popped goal is not counted.
    pub expanded_count: u64,
    pub generated_count: u64,
    pub reopened_count: u64,
    pub expansion_order: Vec<StateId>,
    /// g of each expanded state at the time it was expanded.
    pub expansion_g: Vec<f64>,
    /// Merit of each expanded state at the time it was expanded.
    pub expansion_f: Vec<f64>,
}

/// Serialized form of a [`SearchResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub status: SearchStatus,
    pub cost: Option<f64>,
    pub length: Option<usize>,
    pub expanded: u64,
    pub generated: u64,
    pub reopened: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_order: Option<Vec<StateId>>,
}

impl SearchResult {
    pub fn is_solved(&self) -> bool {
        self.status == SearchStatus::Solved
    }

    pub fn cost(&self) -> Option<f64> {
        self.plan.as_ref().map(|p| p.total_cost)
    }

    pub fn summary(&self, include_order: bool) -> SearchSummary {
        SearchSummary {
            status: self.status,
            cost: self.cost(),
            length: self.plan.as_ref().map(Plan::length),
            expanded: self.expanded_count,
            generated: self.generated_count,
            reopened: self.reopened_count,
            expansion_order: include_order.then(|| self.expansion_order.clone()),
        }
    }
}

struct OpenEntry {
    f: f64,
    g: f64,
    seq: u64,
    policy: TiePolicy,
    state: StateId,
}

impl OpenEntry {
    /// `Greater` means popped earlier.
    fn priority(&self, other: &Self) -> Ordering {
        let by_f = other.f.total_cmp(&self.f);
        if by_f != Ordering::Equal {
            return by_f;
        }
        let recent = self.seq.cmp(&other.seq);
        match self.policy {
            TiePolicy::Lifo => recent,
            TiePolicy::Fifo => recent.reverse(),
            TiePolicy::LowerG => other.g.total_cmp(&self.g).then(recent),
            TiePolicy::HigherG => self.g.total_cmp(&other.g).then(recent),
        }
    }
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority(other)
    }
}

struct Node {
    g: f64,
    h: f64,
    parent: Option<(StateId, f64)>,
    closed: bool,
    /// Sequence number of the live Open entry.
    seq: u64,
}

/// Runs the search from the instance's initial state.
pub fn forward_search(
    instance: &ProblemInstance,
    h: &dyn Heuristic,
    cfg: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let start = instance.initial_state;
    let mut nodes: HashMap<StateId, Node> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let merit = |g: f64, hv: f64| cfg.alpha * g + cfg.beta * hv;

    let h0 = h.h(instance, start)?;
    nodes.insert(
        start,
        Node {
            g: 0.0,
            h: h0,
            parent: None,
            closed: false,
            seq,
        },
    );
    heap.push(OpenEntry {
        f: merit(0.0, h0),
        g: 0.0,
        seq,
        policy: cfg.tie_policy,
        state: start,
    });

    let mut result = SearchResult {
        status: SearchStatus::ExhaustedOpen,
        plan: None,
        expanded_count: 0,
        generated_count: 0,
        reopened_count: 0,
        expansion_order: Vec::new(),
        expansion_g: Vec::new(),
        expansion_f: Vec::new(),
    };
    let mut succ = Vec::new();

    while let Some(entry) = heap.pop() {
        let s = entry.state;
        let node = nodes.get_mut(&s).expect("queued states are known");
        if node.closed || node.seq != entry.seq {
            continue;
        }
        if instance.is_goal(s) {
            result.status = SearchStatus::Solved;
            result.plan = Some(extract_plan(&nodes, s));
            return Ok(result);
        }
        let out_of_time = cfg
            .seconds_budget
            .is_some_and(|limit| started.elapsed().as_secs_f64() >= limit);
        if result.expanded_count >= cfg.expansion_budget || out_of_time {
            result.status = SearchStatus::BudgetExhausted;
            return Ok(result);
        }
        node.closed = true;
        let g = node.g;
        result.expanded_count += 1;
        result.expansion_order.push(s);
        result.expansion_g.push(g);
        result.expansion_f.push(entry.f);

        instance.successors_into(s, &mut succ)?;
        for &(t, cost) in &succ {
            result.generated_count += 1;
            let new_g = g + cost;
            let hv = match nodes.entry(t) {
                Entry::Vacant(v) => {
                    let hv = h.h(instance, t)?;
                    seq += 1;
                    v.insert(Node {
                        g: new_g,
                        h: hv,
                        parent: Some((s, cost)),
                        closed: false,
                        seq,
                    });
                    hv
                }
                Entry::Occupied(mut o) => {
                    let n = o.get_mut();
                    if new_g + COST_EPS >= n.g {
                        continue;
                    }
                    if n.closed {
                        if cfg.reopening == Reopening::Disabled {
                            continue;
                        }
                        n.closed = false;
                        result.reopened_count += 1;
                    }
                    seq += 1;
                    n.g = new_g;
                    n.parent = Some((s, cost));
                    n.seq = seq;
                    n.h
                }
            };
            heap.push(OpenEntry {
                f: merit(new_g, hv),
                g: new_g,
                seq,
                policy: cfg.tie_policy,
                state: t,
            });
        }
        if let Some(limit) = cfg.generated_budget {
            if result.generated_count > limit {
                result.status = SearchStatus::BudgetExhausted;
                return Ok(result);
            }
        }
    }
    Ok(result)
}

fn extract_plan(nodes: &HashMap<StateId, Node>, goal: StateId) -> Plan {
    let mut edges = Vec::new();
    let mut cur = goal;
    while let Some((p, cost)) = nodes[&cur].parent {
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

/// The first problem found by [`plan_diagnostics`].
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PlanViolation {
    #[error("plan starts at {found}, expected the initial state {expected}")]
    WrongStart { expected: StateId, found: StateId },
    #[error("edge {index} does not continue from the previous edge")]
    BrokenChain { index: usize },
    #[error("edge {index} is not a transition of the instance")]
    IllegalEdge { index: usize },
    #[error("edge {index} has cost {found}, the instance says {expected:?}")]
    CostMismatch {
        index: usize,
        expected: Vec<f64>,
        found: f64,
    },
    #[error("total cost {found} differs from the edge sum {expected}")]
    TotalMismatch { expected: f64, found: f64 },
    #[error("final state {0} is not a goal")]
    NotGoal(StateId),
    #[error("invalid state: {0}")]
    Domain(String),
}

/// Checks a plan and reports the first violation.
pub fn plan_diagnostics(instance: &ProblemInstance, plan: &Plan) -> Result<(), PlanViolation> {
    let start = instance.initial_state;
    let mut cur = start;
    let mut sum = 0.0;
    for (index, e) in plan.edges.iter().enumerate() {
        if e.from != cur {
            return Err(if index == 0 {
                PlanViolation::WrongStart {
                    expected: start,
                    found: e.from,
                }
            } else {
                PlanViolation::BrokenChain { index }
            });
        }
        let succ = instance
            .successors(e.from)
            .map_err(|err| PlanViolation::Domain(err.to_string()))?;
        let costs: Vec<f64> = succ
            .iter()
            .filter(|(t, _)| *t == e.to)
            .map(|&(_, c)| c)
            .collect();
        if costs.is_empty() {
            return Err(PlanViolation::IllegalEdge { index });
        }
        if !costs.iter().any(|&c| (c - e.cost).abs() <= COST_EPS) {
            return Err(PlanViolation::CostMismatch {
                index,
                expected: costs,
                found: e.cost,
            });
        }
        sum += e.cost;
        cur = e.to;
    }
    if (sum - plan.total_cost).abs() > COST_EPS * (1.0 + sum.abs()) {
        return Err(PlanViolation::TotalMismatch {
            expected: sum,
            found: plan.total_cost,
        });
    }
    if !instance.is_goal(cur) {
        return Err(PlanViolation::NotGoal(cur));
    }
    Ok(())
}

/// True iff the plan is a legal, correctly priced chain from the initial state
/// to a goal.
pub fn validate_plan(instance: &ProblemInstance, plan: &Plan) -> bool {
    plan_diagnostics(instance, plan).is_ok()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub certified: bool,
    pub expanded: u64,
    pub plan_length: usize,
}

/// Whether the search expands exactly the non-goal states of the plan it
/// returns, in plan order.
pub fn certify_strict_optimal_efficiency(
    instance: &ProblemInstance,
    h: &dyn Heuristic,
    cfg: &SearchConfig,
) -> Result<Certificate, SearchError> {
    let result = forward_search(instance, h, cfg)?;
    let Some(plan) = result.plan.as_ref().filter(|_| result.is_solved()) else {
        return Err(SearchError::Inconclusive {
            instance: instance.instance_id.clone(),
            status: result.status,
        });
    };
    let states = plan.states(instance.initial_state);
    let on_path = result.expansion_order.as_slice() == &states[..plan.length()];
    Ok(Certificate {
        certified: on_path && result.expanded_count as usize == plan.length(),
        expanded: result.expanded_count,
        plan_length: plan.length(),
    })
}
