//! State-space abstraction and the concrete instance families.
//!
//! A [`ProblemInstance`] is immutable once built. Every domain exposes the
//! same three queries used by search and learning: [`ProblemInstance::successors`],
//! [`ProblemInstance::is_goal`] and [`ProblemInstance::features`]. States are
//! addressed by a [`StateId`], an injective per-domain packing of the state
//! into 128 bits.

mod explicit;
pub mod fixtures;
mod generate;
mod grid;
mod maze;
mod puzzle;
mod sokoban;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use explicit::{ExplicitGraph, GraphEdge};
pub use generate::{generate_instance, DomainParams, GENERATION_RETRY_LIMIT};
pub use grid::OnewayGrid;
pub use maze::{Maze, Teleport};
pub use puzzle::{PuzzleState, SlidingPuzzle};
pub use sokoban::{SokobanLite, SokobanState};

/// Canonical, hashable encoding of one state of one instance.
///
/// Serialized as a JSON number when it fits in 64 bits and as a decimal
/// string otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u128);

impl Serialize for StateId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match u64::try_from(self.0) {
            Ok(v) => serializer.serialize_u64(v),
            Err(_) => serializer.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for StateId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = StateId;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or a decimal string")
            }

            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<StateId, E> {
                Ok(StateId(u128::from(v)))
            }

            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<StateId, E> {
                v.parse().map(StateId).map_err(E::custom)
            }
        }
        deserializer.deserialize_any(V)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    ExplicitGraph,
    MazeTeleport,
    SlidingPuzzle,
    SokobanLite,
    OnewayGrid,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::ExplicitGraph => "explicit_graph",
            DomainTag::MazeTeleport => "maze_teleport",
            DomainTag::SlidingPuzzle => "sliding_puzzle",
            DomainTag::SokobanLite => "sokoban_lite",
            DomainTag::OnewayGrid => "oneway_grid",
        }
    }
}

impl std::str::FromStr for DomainTag {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "explicit_graph" => DomainTag::ExplicitGraph,
            "maze_teleport" | "maze" => DomainTag::MazeTeleport,
            "sliding_puzzle" | "puzzle" => DomainTag::SlidingPuzzle,
            "sokoban_lite" | "sokoban" => DomainTag::SokobanLite,
            "oneway_grid" | "grid" => DomainTag::OnewayGrid,
            other => return Err(DomainError::UnknownDomain(other.to_string())),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DomainError {
    #[error("state {state} is not a valid {domain} state: {reason}")]
    Encoding {
        domain: &'static str,
        state: StateId,
        reason: String,
    },
    #[error("invalid parameters for {domain}: {reason}")]
    InvalidParams {
        domain: &'static str,
        reason: String,
    },
    #[error("no solvable {domain} instance after {attempts} attempts (seed {seed})")]
    GenerationFailed {
        domain: &'static str,
        seed: u64,
        attempts: usize,
    },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

/// Domain-specific description of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    ExplicitGraph(ExplicitGraph),
    MazeTeleport(Maze),
    SlidingPuzzle(SlidingPuzzle),
    SokobanLite(SokobanLite),
    OnewayGrid(OnewayGrid),
}

/// A search task: state graph (implicit or explicit), initial state and goal
/// predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub instance_id: String,
    pub params: DomainParams,
    pub payload: Payload,
    pub initial_state: StateId,
}

impl ProblemInstance {
    pub fn new(instance_id: impl Into<String>, params: DomainParams, payload: Payload) -> Self {
        let initial_state = match &payload {
            Payload::ExplicitGraph(g) => g.initial_state(),
            Payload::MazeTeleport(m) => m.initial_state(),
            Payload::SlidingPuzzle(p) => p.initial_state(),
            Payload::SokobanLite(s) => s.initial_state(),
            Payload::OnewayGrid(g) => g.initial_state(),
        };
        ProblemInstance {
            instance_id: instance_id.into(),
            params,
            payload,
            initial_state,
        }
    }

    /// Wraps an explicit graph with empty generator parameters.
    pub fn from_graph(instance_id: impl Into<String>, graph: ExplicitGraph) -> Self {
        Self::new(
            instance_id,
            DomainParams::default(),
            Payload::ExplicitGraph(graph),
        )
    }

    pub fn domain_tag(&self) -> DomainTag {
        match self.payload {
            Payload::ExplicitGraph(_) => DomainTag::ExplicitGraph,
            Payload::MazeTeleport(_) => DomainTag::MazeTeleport,
            Payload::SlidingPuzzle(_) => DomainTag::SlidingPuzzle,
            Payload::SokobanLite(_) => DomainTag::SokobanLite,
            Payload::OnewayGrid(_) => DomainTag::OnewayGrid,
        }
    }

    /// Outgoing edges of `s` in a fixed per-domain order.
    pub fn successors(&self, s: StateId) -> Result<Vec<(StateId, f64)>, DomainError> {
        let mut out = Vec::with_capacity(4);
        self.successors_into(s, &mut out)?;
        Ok(out)
    }

    /// Like [`successors`](Self::successors) but reuses `out`, which is cleared first.
    pub fn successors_into(
        &self,
        s: StateId,
        out: &mut Vec<(StateId, f64)>,
    ) -> Result<(), DomainError> {
        out.clear();
        match &self.payload {
            Payload::ExplicitGraph(g) => g.successors_into(s, out),
            Payload::MazeTeleport(m) => m.successors_into(s, out),
            Payload::SlidingPuzzle(p) => p.successors_into(s, out),
            Payload::SokobanLite(k) => k.successors_into(s, out),
            Payload::OnewayGrid(g) => g.successors_into(s, out),
        }
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        match &self.payload {
            Payload::ExplicitGraph(g) => g.is_goal(s),
            Payload::MazeTeleport(m) => m.is_goal(s),
            Payload::SlidingPuzzle(p) => p.is_goal(s),
            Payload::SokobanLite(k) => k.is_goal(s),
            Payload::OnewayGrid(g) => g.is_goal(s),
        }
    }

    /// Fixed-dimension hand features of `s`; see [`feature_dim`](Self::feature_dim).
    pub fn features(&self, s: StateId) -> Result<Vec<f64>, DomainError> {
        match &self.payload {
            Payload::ExplicitGraph(g) => g.features(s),
            Payload::MazeTeleport(m) => m.features(s),
            Payload::SlidingPuzzle(p) => p.features(s),
            Payload::SokobanLite(k) => k.features(s),
            Payload::OnewayGrid(g) => g.features(s),
        }
    }

    pub fn feature_dim(&self) -> usize {
        match &self.payload {
            Payload::ExplicitGraph(g) => g.feature_dim(),
            Payload::MazeTeleport(m) => m.feature_dim(),
            Payload::SlidingPuzzle(p) => p.feature_dim(),
            Payload::SokobanLite(k) => k.feature_dim(),
            Payload::OnewayGrid(g) => g.feature_dim(),
        }
    }

    /// True when every action costs exactly one.
    pub fn is_unit_cost(&self) -> bool {
        match &self.payload {
            Payload::ExplicitGraph(g) => g.edges.iter().all(|e| e.cost == 1.0),
            _ => true,
        }
    }

    /// Every state of the instance, for domains small enough to enumerate.
    ///
    /// Sliding puzzles and Sokoban-lite return `None`.
    pub fn enumerate_states(&self) -> Option<Vec<StateId>> {
        match &self.payload {
            Payload::ExplicitGraph(g) => Some(g.all_states()),
            Payload::MazeTeleport(m) => Some(m.all_states()),
            Payload::OnewayGrid(g) => Some(g.all_states()),
            Payload::SlidingPuzzle(_) | Payload::SokobanLite(_) => None,
        }
    }

    /// Admissible and consistent estimate of the cost-to-goal, where the domain has one.
    pub fn admissible_estimate(&self, s: StateId) -> Option<f64> {
        match &self.payload {
            Payload::MazeTeleport(m) => Some(m.admissible_estimate(s)),
            Payload::SlidingPuzzle(p) => p.manhattan(s).ok().map(f64::from),
            Payload::OnewayGrid(g) => Some(f64::from(g.manhattan(s))),
            Payload::ExplicitGraph(_) | Payload::SokobanLite(_) => None,
        }
    }

    /// Plain description of the goal condition.
    pub fn goal_spec(&self) -> String {
        match &self.payload {
            Payload::ExplicitGraph(g) => {
                let names: Vec<&str> = g
                    .goals
                    .iter()
                    .map(|&i| g.nodes[i as usize].as_str())
                    .collect();
                format!("node in {{{}}}", names.join(", "))
            }
            Payload::MazeTeleport(m) => format!("agent at cell ({0},{0})", m.size - 1),
            Payload::SlidingPuzzle(_) => "tiles in order, blank first".to_string(),
            Payload::SokobanLite(_) => "every box on a goal cell".to_string(),
            Payload::OnewayGrid(_) => "agent at (0,0)".to_string(),
        }
    }

    /// Human-readable name of a state.
    pub fn describe(&self, s: StateId) -> String {
        match &self.payload {
            Payload::ExplicitGraph(g) => g.node_name(s).unwrap_or("?").to_string(),
            Payload::MazeTeleport(m) => {
                let (r, c) = m.position(s);
                format!("({r},{c})")
            }
            Payload::OnewayGrid(_) => {
                let (x, y) = OnewayGrid::decode(s);
                format!("({x},{y})")
            }
            Payload::SlidingPuzzle(p) => match p.decode(s) {
                Ok(st) => format!("{:?}", st.tiles),
                Err(_) => s.to_string(),
            },
            Payload::SokobanLite(k) => match k.decode(s) {
                Ok(st) => format!("agent {} boxes {:?}", st.agent, st.boxes),
                Err(_) => s.to_string(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_ids_serialize_compactly_and_losslessly() {
        assert_eq!(serde_json::to_string(&StateId(7)).unwrap(), "7");
        let big = StateId(1 << 100);
        let text = serde_json::to_string(&big).unwrap();
        assert_eq!(text, format!("\"{}\"", 1u128 << 100));
        assert_eq!(serde_json::from_str::<StateId>(&text).unwrap(), big);
        assert!(serde_json::from_str::<StateId>("-1").is_err());
    }
}

/// An ordered edge list solving an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub edges: Vec<PlanEdge>,
    pub total_cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub from: StateId,
    pub to: StateId,
    pub cost: f64,
}

impl Plan {
    pub fn empty() -> Self {
        Plan {
            edges: Vec::new(),
            total_cost: 0.0,
        }
    }

    pub fn from_edges(edges: Vec<PlanEdge>) -> Self {
        let total_cost = edges.iter().map(|e| e.cost).sum();
        Plan { edges, total_cost }
    }

    /// Builds a plan from a state sequence, reading costs from the instance.
    ///
    /// Returns `None` if two consecutive states are not connected.
    pub fn from_states(instance: &ProblemInstance, states: &[StateId]) -> Option<Self> {
        let mut edges = Vec::with_capacity(states.len().saturating_sub(1));
        for w in states.windows(2) {
            let succ = instance.successors(w[0]).ok()?;
            let cost = succ
                .iter()
                .filter(|(t, _)| *t == w[1])
                .map(|&(_, c)| c)
                .min_by(f64::total_cmp)?;
            edges.push(PlanEdge {
                from: w[0],
                to: w[1],
                cost,
            });
        }
        Some(Plan::from_edges(edges))
    }

    /// Number of edges.
    pub fn length(&self) -> usize {
        self.edges.len()
    }

    /// The l+1 visited states, starting at `start` when the plan is empty.
    pub fn states(&self, start: StateId) -> Vec<StateId> {
        let mut out = Vec::with_capacity(self.edges.len() + 1);
        out.push(self.edges.first().map_or(start, |e| e.from));
        out.extend(self.edges.iter().map(|e| e.to));
        out
    }
}
