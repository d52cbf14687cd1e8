//! Hand-written instances used by tests, verification cases and examples.

use super::{DomainParams, ExplicitGraph, OnewayGrid, Payload, ProblemInstance};

/// The five-node graph on which the exact cost-to-goal misleads greedy search.
///
/// Edges A→C (2), A→B (8), C→D (4), B→E (3), D→E (4); start A, goal E.
pub fn greedy_counterexample_graph() -> ExplicitGraph {
    ExplicitGraph::from_named(
        &["A", "B", "C", "D", "E"],
        &[
            ("A", "C", 2.0),
            ("A", "B", 8.0),
            ("C", "D", 4.0),
            ("B", "E", 3.0),
            ("D", "E", 4.0),
        ],
        "A",
        &["E"],
    )
    .expect("static fixture")
    .with_reference_h(&[("A", 10.0), ("B", 3.0), ("C", 8.0), ("D", 4.0), ("E", 0.0)])
}

/// Four-node graph where greedy search from D reaches the goal A through an
/// expensive direct edge. Edges as drawn: A→C (1), A→B (1), A→D (9), B→C (9),
/// B→D (1). Initial D, goal A.
pub fn greedy_nonexistence_graph(directed: bool) -> ExplicitGraph {
    let g = ExplicitGraph::from_named(
        &["A", "B", "C", "D"],
        &[
            ("A", "C", 1.0),
            ("A", "B", 1.0),
            ("A", "D", 9.0),
            ("B", "C", 9.0),
            ("B", "D", 1.0),
        ],
        "D",
        &["A"],
    )
    .expect("static fixture")
    .with_reference_h(&[("A", 0.0), ("B", 1.0), ("C", 1.0), ("D", 2.0)]);
    if directed {
        g
    } else {
        g.undirected()
    }
}

/// The search tree with optimal path s0→s1→s2→s3 and off-path leaves
/// s4, s5 (children of s0) and s6, s7 (children of s1). Unit costs; goal s3.
pub fn ranking_tree_graph() -> ExplicitGraph {
    ExplicitGraph::from_named(
        &["s0", "s1", "s2", "s3", "s4", "s5", "s6", "s7"],
        &[
            ("s0", "s1", 1.0),
            ("s0", "s4", 1.0),
            ("s0", "s5", 1.0),
            ("s1", "s2", 1.0),
            ("s1", "s6", 1.0),
            ("s1", "s7", 1.0),
            ("s2", "s3", 1.0),
        ],
        "s0",
        &["s3"],
    )
    .expect("static fixture")
}

/// [`greedy_counterexample_graph`] as an instance.
pub fn greedy_counterexample() -> ProblemInstance {
    ProblemInstance::from_graph("greedy-counterexample", greedy_counterexample_graph())
}

/// [`greedy_nonexistence_graph`] as an instance.
pub fn greedy_nonexistence(directed: bool) -> ProblemInstance {
    let id = if directed {
        "greedy-nonexistence-directed"
    } else {
        "greedy-nonexistence-undirected"
    };
    ProblemInstance::from_graph(id, greedy_nonexistence_graph(directed))
}

/// [`ranking_tree_graph`] as an instance.
pub fn ranking_tree() -> ProblemInstance {
    ProblemInstance::from_graph("ranking-tree", ranking_tree_graph())
}

/// The one-way grid with start `(size-1, size-1)` and goal `(0, 0)`.
pub fn oneway_grid(size: u32) -> ProblemInstance {
    ProblemInstance::new(
        format!("oneway_grid-{size}"),
        DomainParams::sized(size),
        Payload::OnewayGrid(OnewayGrid::new(size).expect("size >= 2")),
    )
}
