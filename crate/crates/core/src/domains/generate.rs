use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    DomainError, DomainTag, ExplicitGraph, GraphEdge, Maze, OnewayGrid, Payload, ProblemInstance,
    SlidingPuzzle, SokobanLite,
};
use crate::oracle::{self, OracleLimits};

/// Attempts made before generation gives up.
pub const GENERATION_RETRY_LIMIT: usize = 100;

/// Generator parameters. Unset fields take per-domain defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teleports: Option<usize>,
    /// Fraction of spanning-tree walls knocked out afterwards (mazes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<usize>,
    /// Random-walk length for puzzles and reverse pulls for Sokoban-lite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scramble: Option<usize>,
    /// Edge probability for random explicit graphs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_probability: Option<f64>,
}

impl DomainParams {
    pub fn sized(size: u32) -> Self {
        DomainParams {
            size: Some(size),
            ..Default::default()
        }
    }

    pub fn maze(size: u32, teleports: usize) -> Self {
        DomainParams {
            size: Some(size),
            teleports: Some(teleports),
            ..Default::default()
        }
    }

    /// Fills every field with the domain default.
    pub fn resolved(&self, tag: DomainTag) -> DomainParams {
        let size = self.size.unwrap_or(match tag {
            DomainTag::ExplicitGraph => 12,
            DomainTag::MazeTeleport => 15,
            DomainTag::SlidingPuzzle => 3,
            DomainTag::SokobanLite => 7,
            DomainTag::OnewayGrid => 5,
        });
        let mut p = DomainParams {
            size: Some(size),
            ..Default::default()
        };
        match tag {
            DomainTag::MazeTeleport => {
                p.teleports = Some(self.teleports.unwrap_or(4));
                p.loop_fraction = Some(self.loop_fraction.unwrap_or(0.1));
            }
            DomainTag::SlidingPuzzle => {
                p.scramble = Some(self.scramble.unwrap_or(10 * (size * size) as usize));
            }
            DomainTag::SokobanLite => {
                p.boxes = Some(self.boxes.unwrap_or(2));
                p.scramble = Some(self.scramble.unwrap_or(60));
            }
            DomainTag::ExplicitGraph => {
                p.edge_probability = Some(self.edge_probability.unwrap_or(0.25));
            }
            DomainTag::OnewayGrid => {}
        }
        p
    }
}

/// Seed used for the `attempt`-th try of `seed`.
fn sub_seed(seed: u64, attempt: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(attempt as u64)
        .rotate_left(17)
}

/// Builds a solvable instance deterministically from `(tag, params, seed)`.
///
/// Candidates are drawn from derived sub-seeds until the oracle confirms a
/// plan exists (and, for randomized domains, that the start is not already a
/// goal).
pub fn generate_instance(
    tag: DomainTag,
    params: &DomainParams,
    seed: u64,
) -> Result<ProblemInstance, DomainError> {
    let params = params.resolved(tag);
    let size = params.size.expect("resolved");
    if size < 2 {
        return Err(DomainError::InvalidParams {
            domain: tag.as_str(),
            reason: format!("size must be >= 2, got {size}"),
        });
    }
    let instance_id = format!("{}-{}-s{}", tag.as_str(), size, seed);

    if tag == DomainTag::OnewayGrid {
        let payload = Payload::OnewayGrid(OnewayGrid::new(size)?);
        return Ok(ProblemInstance::new(instance_id, params, payload));
    }

    let limits = OracleLimits::default();
    for attempt in 0..GENERATION_RETRY_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, attempt));
        let payload = match tag {
            DomainTag::MazeTeleport => Payload::MazeTeleport(Maze::carve(
                size,
                params.teleports.expect("resolved"),
                params.loop_fraction.expect("resolved"),
                &mut rng,
            )?),
            DomainTag::SlidingPuzzle => Payload::SlidingPuzzle(SlidingPuzzle::scrambled(
                size,
                params.scramble.expect("resolved"),
                &mut rng,
            )?),
            DomainTag::SokobanLite => Payload::SokobanLite(SokobanLite::generate(
                size,
                params.boxes.expect("resolved"),
                params.scramble.expect("resolved"),
                &mut rng,
            )?),
            DomainTag::ExplicitGraph => Payload::ExplicitGraph(random_graph(
                size,
                params.edge_probability.expect("resolved"),
                &mut rng,
            )),
            DomainTag::OnewayGrid => unreachable!("handled above"),
        };
        let candidate = ProblemInstance::new(instance_id.clone(), params.clone(), payload);
        if candidate.is_goal(candidate.initial_state) {
            continue;
        }
        if oracle::optimal_solve(&candidate, &limits).is_ok() {
            return Ok(candidate);
        }
    }
    Err(DomainError::GenerationFailed {
        domain: tag.as_str(),
        seed,
        attempts: GENERATION_RETRY_LIMIT,
    })
}

/// Directed graph on `nodes` vertices with integer costs in `0..=9`
/// (zero-cost edges included), start `n0` and goal `n{nodes-1}`.
fn random_graph<R: Rng>(nodes: u32, edge_probability: f64, rng: &mut R) -> ExplicitGraph {
    let mut edges = Vec::new();
    for a in 0..nodes {
        for b in 0..nodes {
            if a != b && rng.gen_bool(edge_probability.clamp(0.0, 1.0)) {
                edges.push(GraphEdge {
                    from: a,
                    to: b,
                    cost: f64::from(rng.gen_range(0u32..10)),
                });
            }
        }
    }
    ExplicitGraph {
        nodes: (0..nodes).map(|i| format!("n{i}")).collect(),
        edges,
        directed: true,
        initial: 0,
        goals: vec![nodes - 1],
        reference_h: Default::default(),
    }
}
