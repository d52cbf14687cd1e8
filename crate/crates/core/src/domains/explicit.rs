use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DomainError, StateId};

/// A weighted edge between two node indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: u32,
    pub to: u32,
    pub cost: f64,
}

/// A small hand-written state graph.
///
/// Successors follow edge declaration order. When `directed` is false every
/// edge is traversable both ways.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
    #[serde(default = "default_true")]
    pub directed: bool,
    pub initial: u32,
    pub goals: Vec<u32>,
    /// Optional per-node reference cost-to-goal values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reference_h: BTreeMap<String, f64>,
}

fn default_true() -> bool {
    true
}

impl ExplicitGraph {
    /// Builds a graph from named nodes and `(from, to, cost)` edges.
    pub fn from_named(
        nodes: &[&str],
        edges: &[(&str, &str, f64)],
        initial: &str,
        goals: &[&str],
    ) -> Result<Self, DomainError> {
        let names: Vec<String> = nodes.iter().map(|s| s.to_string()).collect();
        let index = |n: &str| -> Result<u32, DomainError> {
            names
                .iter()
                .position(|m| m == n)
                .map(|i| i as u32)
                .ok_or_else(|| DomainError::UnknownNode(n.to_string()))
        };
        let mut es = Vec::with_capacity(edges.len());
        for &(a, b, c) in edges {
            if !(c >= 0.0) {
                return Err(DomainError::InvalidParams {
                    domain: "explicit_graph",
                    reason: format!("edge {a}->{b} has negative or NaN cost {c}"),
                });
            }
            es.push(GraphEdge {
                from: index(a)?,
                to: index(b)?,
                cost: c,
            });
        }
        let goals = goals.iter().map(|g| index(g)).collect::<Result<_, _>>()?;
        Ok(ExplicitGraph {
            initial: index(initial)?,
            nodes: names,
            edges: es,
            directed: true,
            goals,
            reference_h: BTreeMap::new(),
        })
    }

    pub fn with_reference_h(mut self, values: &[(&str, f64)]) -> Self {
        self.reference_h = values.iter().map(|&(n, v)| (n.to_string(), v)).collect();
        self
    }

    pub fn undirected(mut self) -> Self {
        self.directed = false;
        self
    }

    pub fn state_of(&self, name: &str) -> Option<StateId> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .map(|i| StateId(i as u128))
    }

    pub fn node_name(&self, s: StateId) -> Option<&str> {
        usize::try_from(s.0)
            .ok()
            .and_then(|i| self.nodes.get(i))
            .map(String::as_str)
    }

    /// Reference cost-to-goal of a state, if the fixture carries one.
    pub fn reference_h_of(&self, s: StateId) -> Option<f64> {
        self.node_name(s)
            .and_then(|n| self.reference_h.get(n))
            .copied()
    }

    pub(crate) fn initial_state(&self) -> StateId {
        StateId(u128::from(self.initial))
    }

    fn check(&self, s: StateId) -> Result<u32, DomainError> {
        if s.0 < self.nodes.len() as u128 {
            Ok(s.0 as u32)
        } else {
            Err(DomainError::Encoding {
                domain: "explicit_graph",
                state: s,
                reason: format!("node index out of range 0..{}", self.nodes.len()),
            })
        }
    }

    pub(crate) fn successors_into(
        &self,
        s: StateId,
        out: &mut Vec<(StateId, f64)>,
    ) -> Result<(), DomainError> {
        let v = self.check(s)?;
        for e in &self.edges {
            if e.from == v {
                out.push((StateId(u128::from(e.to)), e.cost));
            }
            if !self.directed && e.to == v && e.from != v {
                out.push((StateId(u128::from(e.from)), e.cost));
            }
        }
        Ok(())
    }

    pub(crate) fn is_goal(&self, s: StateId) -> bool {
        self.goals.iter().any(|&g| u128::from(g) == s.0)
    }

    pub(crate) fn feature_dim(&self) -> usize {
        2
    }

    /// `[reference cost-to-goal (0 when absent), goal indicator]`.
    pub(crate) fn features(&self, s: StateId) -> Result<Vec<f64>, DomainError> {
        self.check(s)?;
        Ok(vec![
            self.reference_h_of(s).unwrap_or(0.0),
            if self.is_goal(s) { 1.0 } else { 0.0 },
        ])
    }

    pub(crate) fn all_states(&self) -> Vec<StateId> {
        (0..self.nodes.len()).map(|i| StateId(i as u128)).collect()
    }
}
