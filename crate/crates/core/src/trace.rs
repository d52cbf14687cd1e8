//! Ranking supervision from optimal plans.
//!
//! A [`RankingTrace`] replays forward search while expanding only the states
//! of one plan. After expanding `s_{i-1}` the Open list holds the on-path
//! successor `s_i` and a set of rivals, each with the cheapest g seen so far.
//! The trace is then compiled into loss-specific [`TrainingRecord`]s.
//!
//! Labels (exact cost-to-goal) are optional and only read when a record kind
//! needs them. Every read goes through a counter so callers can check that
//! ranking records never touch them.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::domains::{DomainError, Plan, ProblemInstance, StateId};
use crate::losses::LossKind;
use crate::oracle::{self, CostLabel, CostToGoalTable, OracleError, OracleLimits};
use crate::search::{plan_diagnostics, PlanViolation};
use crate::FORMAT_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("plan for {instance} is invalid: {violation}")]
    InvalidPlan {
        instance: String,
        violation: PlanViolation,
    },
    #[error("plan for {instance} revisits state {state}")]
    Revisit { instance: String, state: StateId },
    #[error("missing cost-to-goal labels on {instance} for states {states:?}")]
    MissingLabels {
        instance: String,
        states: Vec<StateId>,
    },
    #[error(
        "dead-end states {states:?} on {instance} have no finite label; supply the capped label"
    )]
    DeadEndLabel {
        instance: String,
        states: Vec<StateId>,
    },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// One iteration of the replay: the Open list after expanding `s_{i-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub i: usize,
    pub on_path: StateId,
    pub g_on_path: f64,
    /// Rivals in generation order, each with its cheapest g so far.
    pub off_path: Vec<(StateId, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub state: StateId,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<CostLabel>,
}

#[derive(Debug, Default)]
struct LookupCounter(AtomicUsize);

impl Clone for LookupCounter {
    fn clone(&self) -> Self {
        LookupCounter(AtomicUsize::new(self.0.load(Ordering::Relaxed)))
    }
}

impl PartialEq for LookupCounter {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingTrace {
    pub instance_id: String,
    pub initial_state: StateId,
    pub plan: Plan,
    pub unit_cost: bool,
    pub steps: Vec<TraceStep>,
    /// Successors of each plan state `s_0 .. s_l`, in domain order.
    pub children: Vec<Vec<StateId>>,
    /// Every state referenced above, in first-seen order.
    pub state_table: Vec<StateEntry>,
    /// Replacement label for dead ends, set when labels are attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_end_cap: Option<f64>,
    #[serde(skip)]
    index: HashMap<StateId, usize>,
    #[serde(skip)]
    lookups: LookupCounter,
}

/// Which iterations contribute ranking pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// Iterations `1..=l`, including the one where the goal is in Open.
    #[default]
    AllSteps,
    /// Iterations `1..l`, omitting the goal iteration.
    BeforeGoal,
}

/// States that receive a regression target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScope {
    /// The `l + 1` plan states.
    #[default]
    Path,
    /// Plan states and every rival of every iteration.
    AllTraceStates,
}

/// What regression targets do with dead ends.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadEndPolicy {
    #[default]
    Reject,
    /// Use the trace's capped label.
    Capped,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOptions {
    pub pair_scope: PairScope,
    pub label_scope: LabelScope,
    pub dead_ends: DeadEndPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainingRecord {
    /// `s_i` must out-rank `s_j` in iteration `step`.
    Pair {
        step: usize,
        s_i: StateId,
        s_j: StateId,
        g_i: f64,
        g_j: f64,
    },
    PathTransition {
        parent: StateId,
        child: StateId,
    },
    LabeledState {
        state: StateId,
        h_star: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        capped: bool,
    },
    ParentChildren {
        state: StateId,
        h_star: f64,
        children: Vec<StateId>,
    },
}

impl TrainingRecord {
    /// States whose heuristic value the record reads.
    pub fn states(&self) -> Vec<StateId> {
        match self {
            TrainingRecord::Pair { s_i, s_j, .. } => vec![*s_i, *s_j],
            TrainingRecord::PathTransition { parent, child } => vec![*parent, *child],
            TrainingRecord::LabeledState { state, .. } => vec![*state],
            TrainingRecord::ParentChildren {
                state, children, ..
            } => std::iter::once(*state)
                .chain(children.iter().copied())
                .collect(),
        }
    }
}

/// All records of one instance for one loss: one minibatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub format_version: u32,
    pub instance_id: String,
    pub loss_kind: LossKind,
    pub records: Vec<TrainingRecord>,
    /// Features of every state referenced by `records`.
    pub states: Vec<StateEntry>,
}

impl RecordSet {
    pub fn features_of(&self) -> HashMap<StateId, &[f64]> {
        self.states
            .iter()
            .map(|e| (e.state, e.features.as_slice()))
            .collect()
    }
}

impl RankingTrace {
    fn intern(&mut self, instance: &ProblemInstance, s: StateId) -> Result<(), DomainError> {
        if !self.index.contains_key(&s) {
            self.index.insert(s, self.state_table.len());
            self.state_table.push(StateEntry {
                state: s,
                features: instance.features(s)?,
                label: None,
            });
        }
        Ok(())
    }

    /// Plan states `s_0 .. s_l`.
    pub fn path(&self) -> Vec<StateId> {
        self.plan.states(self.initial_state)
    }

    pub fn entry(&self, s: StateId) -> Option<&StateEntry> {
        self.index.get(&s).map(|&i| &self.state_table[i])
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .state_table
            .iter()
            .enumerate()
            .map(|(i, e)| (e.state, i))
            .collect();
    }

    /// Reads a label, counting the access.
    pub fn label(&self, s: StateId) -> Option<CostLabel> {
        self.lookups.0.fetch_add(1, Ordering::Relaxed);
        self.entry(s).and_then(|e| e.label)
    }

    /// Number of label reads so far.
    pub fn label_lookups(&self) -> usize {
        self.lookups.0.load(Ordering::Relaxed)
    }

    /// Copies labels for every known state from `table` and sets the dead-end
    /// cap to twice the largest finite label.
    pub fn attach_labels(&mut self, table: &CostToGoalTable) {
        for e in &mut self.state_table {
            if let Some(l) = table.get(e.state) {
                e.label = Some(l);
            }
        }
        self.dead_end_cap = Some(table.capped_dead_end_value());
    }

    /// Number of ranking pairs under `scope`.
    pub fn pair_count(&self, scope: PairScope) -> usize {
        self.pair_steps(scope).map(|s| s.off_path.len()).sum()
    }

    fn pair_steps(&self, scope: PairScope) -> impl Iterator<Item = &TraceStep> {
        let l = self.steps.len();
        let take = match scope {
            PairScope::AllSteps => l,
            PairScope::BeforeGoal => l.saturating_sub(1),
        };
        self.steps.iter().take(take)
    }

    /// Compiles the trace into records for `kind`.
    pub fn training_records(
        &self,
        kind: LossKind,
        opts: &RecordOptions,
    ) -> Result<RecordSet, TraceError> {
        let path = self.path();
        let mut records = Vec::new();
        match kind {
            LossKind::Lstar | LossKind::Lgbfs => {
                for step in self.pair_steps(opts.pair_scope) {
                    for &(s_j, g_j) in &step.off_path {
                        records.push(TrainingRecord::Pair {
                            step: step.i,
                            s_i: step.on_path,
                            s_j,
                            g_i: step.g_on_path,
                            g_j,
                        });
                    }
                }
            }
            LossKind::Lrt => {
                for w in path.windows(2) {
                    records.push(TrainingRecord::PathTransition {
                        parent: w[0],
                        child: w[1],
                    });
                }
            }
            LossKind::L2 => {
                let mut targets = path.clone();
                if opts.label_scope == LabelScope::AllTraceStates {
                    let mut seen: std::collections::HashSet<StateId> =
                        targets.iter().copied().collect();
                    for step in &self.steps {
                        for &(s, _) in &step.off_path {
                            if seen.insert(s) {
                                targets.push(s);
                            }
                        }
                    }
                }
                let labels = self.labels_for(&targets, opts.dead_ends)?;
                for (s, (h_star, capped)) in targets.into_iter().zip(labels) {
                    records.push(TrainingRecord::LabeledState {
                        state: s,
                        h_star,
                        capped,
                    });
                }
            }
            LossKind::Lbe => {
                let labels = self.labels_for(&path, opts.dead_ends)?;
                for (k, (s, (h_star, _))) in path.iter().zip(labels).enumerate() {
                    records.push(TrainingRecord::ParentChildren {
                        state: *s,
                        h_star,
                        children: self.children[k].clone(),
                    });
                }
            }
        }
        let mut wanted: Vec<StateId> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            for s in r.states() {
                if seen.insert(s) {
                    wanted.push(s);
                }
            }
        }
        let states = wanted
            .into_iter()
            .map(|s| {
                let mut e = self.entry(s).expect("record states are interned").clone();
                e.label = None;
                e
            })
            .collect();
        Ok(RecordSet {
            format_version: FORMAT_VERSION,
            instance_id: self.instance_id.clone(),
            loss_kind: kind,
            records,
            states,
        })
    }

    fn labels_for(
        &self,
        states: &[StateId],
        policy: DeadEndPolicy,
    ) -> Result<Vec<(f64, bool)>, TraceError> {
        let mut missing = Vec::new();
        let mut dead = Vec::new();
        let mut out = Vec::with_capacity(states.len());
        for &s in states {
            match self.label(s) {
                None => missing.push(s),
                Some(CostLabel::Finite(v)) => out.push((v, false)),
                Some(CostLabel::DeadEnd) => match (policy, self.dead_end_cap) {
                    (DeadEndPolicy::Capped, Some(cap)) => out.push((cap, true)),
                    _ => dead.push(s),
                },
            }
        }
        if !missing.is_empty() {
            return Err(TraceError::MissingLabels {
                instance: self.instance_id.clone(),
                states: missing,
            });
        }
        if !dead.is_empty() {
            return Err(TraceError::DeadEndLabel {
                instance: self.instance_id.clone(),
                states: dead,
            });
        }
        Ok(out)
    }
}

/// Replays forward search expanding only the states of `plan`.
///
/// Rivals are deduplicated against expanded plan states and against each
/// other, keeping the cheapest g. The goal `s_l` is never a rival. Rivals that
/// are goals themselves are kept.
pub fn ranking_trace(instance: &ProblemInstance, plan: &Plan) -> Result<RankingTrace, TraceError> {
    plan_diagnostics(instance, plan).map_err(|violation| TraceError::InvalidPlan {
        instance: instance.instance_id.clone(),
        violation,
    })?;
    let path = plan.states(instance.initial_state);
    let goal = *path.last().expect("plan has at least one state");

    let mut trace = RankingTrace {
        instance_id: instance.instance_id.clone(),
        initial_state: instance.initial_state,
        plan: plan.clone(),
        unit_cost: instance.is_unit_cost(),
        steps: Vec::with_capacity(plan.length()),
        children: Vec::with_capacity(path.len()),
        state_table: Vec::new(),
        dead_end_cap: None,
        index: HashMap::new(),
        lookups: LookupCounter::default(),
    };
    for &s in &path {
        trace.intern(instance, s)?;
    }

    // Open list in generation order; `slot` maps a state to its position.
    let mut open: Vec<Option<(StateId, f64)>> = vec![Some((path[0], 0.0))];
    let mut slot: HashMap<StateId, usize> = HashMap::from([(path[0], 0)]);
    let mut closed = std::collections::HashSet::new();
    let mut succ = Vec::new();

    for (i, w) in path.windows(2).enumerate() {
        let (parent, next) = (w[0], w[1]);
        let g_parent = match slot.remove(&parent) {
            Some(k) => open[k].take().expect("slot points at a live entry").1,
            None => {
                return Err(TraceError::Revisit {
                    instance: instance.instance_id.clone(),
                    state: parent,
                })
            }
        };
        closed.insert(parent);
        instance.successors_into(parent, &mut succ)?;
        let mut kids = Vec::with_capacity(succ.len());
        for &(t, c) in &succ {
            kids.push(t);
            trace.intern(instance, t)?;
            if closed.contains(&t) {
                continue;
            }
            let g = g_parent + c;
            match slot.get(&t) {
                Some(&k) => {
                    let entry = open[k].as_mut().expect("live");
                    if g < entry.1 {
                        entry.1 = g;
                    }
                }
                None => {
                    slot.insert(t, open.len());
                    open.push(Some((t, g)));
                }
            }
        }
        trace.children.push(kids);

        let Some(&k) = slot.get(&next) else {
            return Err(TraceError::Revisit {
                instance: instance.instance_id.clone(),
                state: next,
            });
        };
        let g_on_path = open[k].expect("live").1;
        let off_path = open
            .iter()
            .flatten()
            .filter(|&&(s, _)| s != next && s != goal)
            .copied()
            .collect();
        trace.steps.push(TraceStep {
            i: i + 1,
            on_path: next,
            g_on_path,
            off_path,
        });
    }
    instance.successors_into(goal, &mut succ)?;
    for &(t, _) in &succ {
        trace.intern(instance, t)?;
    }
    trace.children.push(succ.iter().map(|&(t, _)| t).collect());
    Ok(trace)
}

/// Fills exact cost-to-goal labels for the states the trace references.
pub fn label_trace(
    instance: &ProblemInstance,
    trace: &mut RankingTrace,
    limits: &OracleLimits,
) -> Result<(), TraceError> {
    let states: Vec<StateId> = trace.state_table.iter().map(|e| e.state).collect();
    let table = oracle::cost_to_goal(instance, Some(&states), limits)?;
    trace.attach_labels(&table);
    Ok(())
}

/// Total ranking pairs over `traces`.
pub fn count_pairs(traces: &[RankingTrace], scope: PairScope) -> usize {
    traces.iter().map(|t| t.pair_count(scope)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::fixtures;

    fn tree_trace() -> (ProblemInstance, RankingTrace) {
        let inst = fixtures::ranking_tree();
        let plan = oracle::optimal_solve(&inst, &OracleLimits::default()).unwrap();
        let t = ranking_trace(&inst, &plan).unwrap();
        (inst, t)
    }

    fn named(inst: &ProblemInstance, xs: &[(StateId, f64)]) -> Vec<String> {
        xs.iter().map(|&(s, _)| inst.describe(s)).collect()
    }

    #[test]
    fn open_lists_of_the_ranking_tree() {
        let (inst, t) = tree_trace();
        assert_eq!(t.steps.len(), 3);
        assert_eq!(inst.describe(t.steps[0].on_path), "s1");
        assert_eq!(named(&inst, &t.steps[0].off_path), ["s4", "s5"]);
        assert_eq!(inst.describe(t.steps[1].on_path), "s2");
        assert_eq!(named(&inst, &t.steps[1].off_path), ["s4", "s5", "s6", "s7"]);
        assert_eq!(named(&inst, &t.steps[2].off_path), ["s4", "s5", "s6", "s7"]);
        let gs: Vec<f64> = t.steps[1].off_path.iter().map(|p| p.1).collect();
        assert_eq!(gs, [1.0, 1.0, 2.0, 2.0]);
        assert_eq!(t.steps[1].g_on_path, 2.0);
    }

    #[test]
    fn record_counts_on_the_ranking_tree() {
        let (_, t) = tree_trace();
        let before_goal = RecordOptions {
            pair_scope: PairScope::BeforeGoal,
            ..Default::default()
        };
        let pairs = t.training_records(LossKind::Lstar, &before_goal).unwrap();
        assert_eq!(pairs.records.len(), 6);
        assert_eq!(
            count_pairs(std::slice::from_ref(&t), PairScope::BeforeGoal),
            6
        );
        assert_eq!(
            count_pairs(std::slice::from_ref(&t), PairScope::AllSteps),
            10
        );
        assert_eq!(count_pairs(&[], PairScope::AllSteps), 0);

        let rt = t
            .training_records(LossKind::Lrt, &Default::default())
            .unwrap();
        assert_eq!(rt.records.len(), 3);
        assert_eq!(t.label_lookups(), 0);
    }

    #[test]
    fn regression_records_need_labels() {
        let (inst, mut t) = tree_trace();
        assert!(matches!(
            t.training_records(LossKind::L2, &Default::default()),
            Err(TraceError::MissingLabels { .. })
        ));
        label_trace(&inst, &mut t, &OracleLimits::default()).unwrap();
        let l2 = t
            .training_records(LossKind::L2, &Default::default())
            .unwrap();
        assert_eq!(l2.records.len(), 4);
        let targets: Vec<f64> = l2
            .records
            .iter()
            .map(|r| match r {
                TrainingRecord::LabeledState { h_star, .. } => *h_star,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(targets, [3.0, 2.0, 1.0, 0.0]);
        // Off-path leaves of the tree are dead ends.
        let all = RecordOptions {
            label_scope: LabelScope::AllTraceStates,
            ..Default::default()
        };
        assert!(matches!(
            t.training_records(LossKind::L2, &all),
            Err(TraceError::DeadEndLabel { .. })
        ));
        let capped = RecordOptions {
            dead_ends: DeadEndPolicy::Capped,
            ..all
        };
        let l2 = t.training_records(LossKind::L2, &capped).unwrap();
        assert_eq!(l2.records.len(), 8);
        assert!(l2.records.iter().any(|r| matches!(
            r,
            TrainingRecord::LabeledState { capped: true, h_star, .. } if *h_star == 6.0
        )));

        let be = t
            .training_records(LossKind::Lbe, &Default::default())
            .unwrap();
        assert_eq!(be.records.len(), 4);
        match &be.records[1] {
            TrainingRecord::ParentChildren { children, .. } => assert_eq!(children.len(), 3),
            _ => unreachable!(),
        }
    }

    #[test]
    fn corridor_has_no_rivals() {
        let inst = fixtures::oneway_grid(2);
        let g = crate::domains::OnewayGrid::encode;
        let plan = Plan::from_states(&inst, &[g(1, 1), g(0, 1), g(0, 0)]).unwrap();
        let t = ranking_trace(&inst, &plan).unwrap();
        // (1,0) enters Open in step 1 and stays a rival in step 2.
        assert_eq!(t.steps[0].off_path, [(g(1, 0), 1.0)]);
        assert_eq!(t.steps[1].off_path, [(g(1, 0), 1.0)]);

        let line = crate::domains::ExplicitGraph::from_named(
            &["a", "b", "c"],
            &[("a", "b", 1.0), ("b", "c", 1.0)],
            "a",
            &["c"],
        )
        .unwrap();
        let inst = ProblemInstance::from_graph("line", line);
        let plan = oracle::optimal_solve(&inst, &OracleLimits::default()).unwrap();
        let t = ranking_trace(&inst, &plan).unwrap();
        assert!(t.steps.iter().all(|s| s.off_path.is_empty()));
    }

    #[test]
    fn invalid_plan_is_rejected() {
        let inst = fixtures::ranking_tree();
        assert!(matches!(
            ranking_trace(&inst, &Plan::empty()),
            Err(TraceError::InvalidPlan { .. })
        ));
    }

    #[test]
    fn goal_start_gives_an_empty_trace() {
        let mut g = fixtures::ranking_tree_graph();
        g.initial = 3;
        let inst = ProblemInstance::from_graph("at-goal", g);
        let t = ranking_trace(&inst, &Plan::empty()).unwrap();
        assert!(t.steps.is_empty());
        assert_eq!(t.pair_count(PairScope::AllSteps), 0);
    }

    #[test]
    fn trace_round_trips_through_json() {
        let (_, t) = tree_trace();
        let text = serde_json::to_string(&t).unwrap();
        let mut back: RankingTrace = serde_json::from_str(&text).unwrap();
        back.reindex();
        assert_eq!(back, t);
        assert!(back.entry(t.steps[0].on_path).is_some());
    }
}
