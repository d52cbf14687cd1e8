use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DomainError, StateId};

const EAST: u8 = 1;
const SOUTH: u8 = 2;

/// A pair of linked cells. Stepping onto either end moves the agent to the other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Teleport {
    pub a: u32,
    pub b: u32,
}

/// Square maze of `size x size` cells with walls between neighbouring cells
/// and teleport pairs. The agent starts in the upper-left cell and must reach
/// the lower-right one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maze {
    pub size: u32,
    /// Per-cell passage bits: 1 = open to the east, 2 = open to the south.
    pub passages: Vec<u8>,
    pub teleports: Vec<Teleport>,
}

impl Maze {
    /// Carves a spanning-tree maze, knocks out `loop_fraction` of the remaining
    /// interior walls and places `teleport_pairs` teleports on distinct cells.
    pub fn carve<R: Rng>(
        size: u32,
        teleport_pairs: usize,
        loop_fraction: f64,
        rng: &mut R,
    ) -> Result<Self, DomainError> {
        if size < 2 {
            return Err(DomainError::InvalidParams {
                domain: "maze_teleport",
                reason: format!("size must be >= 2, got {size}"),
            });
        }
        let n = size as usize;
        let cells = n * n;
        if 2 * teleport_pairs + 2 > cells {
            return Err(DomainError::InvalidParams {
                domain: "maze_teleport",
                reason: format!("{teleport_pairs} teleport pairs do not fit in {cells} cells"),
            });
        }
        let mut passages = vec![0u8; cells];
        let mut visited = vec![false; cells];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(&cur) = stack.last() {
            let (r, c) = (cur / n, cur % n);
            let mut options = Vec::with_capacity(4);
            if r > 0 && !visited[cur - n] {
                options.push(cur - n);
            }
            if r + 1 < n && !visited[cur + n] {
                options.push(cur + n);
            }
            if c > 0 && !visited[cur - 1] {
                options.push(cur - 1);
            }
            if c + 1 < n && !visited[cur + 1] {
                options.push(cur + 1);
            }
            match options.choose(rng) {
                Some(&next) => {
                    open_between(&mut passages, n, cur, next);
                    visited[next] = true;
                    stack.push(next);
                }
                None => {
                    stack.pop();
                }
            }
        }

        let mut closed_walls = Vec::new();
        for cell in 0..cells {
            let (r, c) = (cell / n, cell % n);
            if c + 1 < n && passages[cell] & EAST == 0 {
                closed_walls.push((cell, cell + 1));
            }
            if r + 1 < n && passages[cell] & SOUTH == 0 {
                closed_walls.push((cell, cell + n));
            }
        }
        closed_walls.shuffle(rng);
        let knock = (closed_walls.len() as f64 * loop_fraction.clamp(0.0, 1.0)).round() as usize;
        for &(a, b) in &closed_walls[..knock] {
            open_between(&mut passages, n, a, b);
        }

        let mut candidates: Vec<u32> = (1..cells as u32 - 1).collect();
        candidates.shuffle(rng);
        let teleports = candidates
            .chunks_exact(2)
            .take(teleport_pairs)
            .map(|p| Teleport { a: p[0], b: p[1] })
            .collect();

        Ok(Maze {
            size,
            passages,
            teleports,
        })
    }

    /// A maze without interior walls.
    pub fn open_grid(size: u32, teleports: Vec<Teleport>) -> Self {
        let n = size as usize;
        let mut passages = vec![0u8; n * n];
        for cell in 0..n * n {
            if cell % n + 1 < n {
                passages[cell] |= EAST;
            }
            if cell / n + 1 < n {
                passages[cell] |= SOUTH;
            }
        }
        Maze {
            size,
            passages,
            teleports,
        }
    }

    pub fn cell(&self, row: u32, col: u32) -> StateId {
        StateId(u128::from(row * self.size + col))
    }

    pub fn position(&self, s: StateId) -> (u32, u32) {
        let c = s.0 as u32;
        (c / self.size, c % self.size)
    }

    pub fn goal_state(&self) -> StateId {
        StateId(u128::from(self.size * self.size - 1))
    }

    pub fn is_open(&self, from: u32, dir: Direction) -> bool {
        let n = self.size;
        let (r, c) = (from / n, from % n);
        match dir {
            Direction::Down => r + 1 < n && self.passages[from as usize] & SOUTH != 0,
            Direction::Up => r > 0 && self.passages[(from - n) as usize] & SOUTH != 0,
            Direction::Right => c + 1 < n && self.passages[from as usize] & EAST != 0,
            Direction::Left => c > 0 && self.passages[(from - 1) as usize] & EAST != 0,
        }
    }

    fn partner(&self, cell: u32) -> Option<u32> {
        self.teleports.iter().find_map(|t| {
            if t.a == cell {
                Some(t.b)
            } else if t.b == cell {
                Some(t.a)
            } else {
                None
            }
        })
    }

    fn check(&self, s: StateId) -> Result<u32, DomainError> {
        let cells = u128::from(self.size) * u128::from(self.size);
        if s.0 < cells {
            Ok(s.0 as u32)
        } else {
            Err(DomainError::Encoding {
                domain: "maze_teleport",
                state: s,
                reason: format!("cell index outside 0..{cells}"),
            })
        }
    }

    pub(crate) fn initial_state(&self) -> StateId {
        StateId(0)
    }

    /// Actions in lexicographic order: down, left, right, up.
    pub(crate) fn successors_into(
        &self,
        s: StateId,
        out: &mut Vec<(StateId, f64)>,
    ) -> Result<(), DomainError> {
        let cell = self.check(s)?;
        let n = self.size;
        for dir in Direction::ALL {
            if !self.is_open(cell, dir) {
                continue;
            }
            let step = match dir {
                Direction::Down => cell + n,
                Direction::Left => cell - 1,
                Direction::Right => cell + 1,
                Direction::Up => cell - n,
            };
            let landing = self.partner(step).unwrap_or(step);
            out.push((StateId(u128::from(landing)), 1.0));
        }
        Ok(())
    }

    pub(crate) fn is_goal(&self, s: StateId) -> bool {
        s == self.goal_state()
    }

    fn manhattan(&self, a: u32, b: u32) -> u32 {
        let n = self.size;
        (a / n).abs_diff(b / n) + (a % n).abs_diff(b % n)
    }

    /// Shortest distance to the goal in the wall-free grid that keeps the
    /// teleports. Admissible and consistent for the maze.
    pub(crate) fn admissible_estimate(&self, s: StateId) -> f64 {
        let start = s.0 as u32;
        let goal = self.goal_state().0 as u32;
        let entries: Vec<(u32, u32)> = self
            .teleports
            .iter()
            .flat_map(|t| [(t.a, t.b), (t.b, t.a)])
            .collect();
        // Dijkstra over {start, teleport landings}; few nodes, so O(k^2).
        let mut best = self.manhattan(start, goal);
        let mut dist: Vec<u32> = entries
            .iter()
            .map(|&(entry, _)| self.manhattan(start, entry))
            .collect();
        let mut done = vec![false; entries.len()];
        loop {
            let next = (0..entries.len())
                .filter(|&i| !done[i])
                .min_by_key(|&i| dist[i]);
            let Some(i) = next else { break };
            if dist[i] >= best {
                break;
            }
            done[i] = true;
            let landing = entries[i].1;
            best = best.min(dist[i] + self.manhattan(landing, goal));
            for j in 0..entries.len() {
                if !done[j] {
                    let via = dist[i] + self.manhattan(landing, entries[j].0);
                    dist[j] = dist[j].min(via);
                }
            }
        }
        f64::from(best)
    }

    pub(crate) fn feature_dim(&self) -> usize {
        4 + 2 * self.teleports.len()
    }

    /// `[Manhattan to goal, teleport-aware lower bound / size, row / (size-1),
    /// col / (size-1), then per teleport pair the Manhattan distances to both
    /// ends / size]`.
    pub(crate) fn features(&self, s: StateId) -> Result<Vec<f64>, DomainError> {
        let cell = self.check(s)?;
        let goal = self.goal_state().0 as u32;
        let n = f64::from(self.size);
        let span = f64::from(self.size - 1);
        let mut out = Vec::with_capacity(self.feature_dim());
        out.push(f64::from(self.manhattan(cell, goal)));
        out.push(self.admissible_estimate(s) / n);
        out.push(f64::from(cell / self.size) / span);
        out.push(f64::from(cell % self.size) / span);
        for t in &self.teleports {
            out.push(f64::from(self.manhattan(cell, t.a)) / n);
            out.push(f64::from(self.manhattan(cell, t.b)) / n);
        }
        Ok(out)
    }

    pub(crate) fn all_states(&self) -> Vec<StateId> {
        (0..u128::from(self.size) * u128::from(self.size))
            .map(StateId)
            .collect()
    }

    /// ASCII rendering: `#` walls, `S` start, `G` goal, digits for teleports.
    pub fn render(&self) -> String {
        let n = self.size as usize;
        let mut rows = vec![vec!['#'; 2 * n + 1]; 2 * n + 1];
        for cell in 0..n * n {
            let (r, c) = (cell / n, cell % n);
            let (y, x) = (2 * r + 1, 2 * c + 1);
            rows[y][x] = ' ';
            if self.passages[cell] & EAST != 0 {
                rows[y][x + 1] = ' ';
            }
            if self.passages[cell] & SOUTH != 0 {
                rows[y + 1][x] = ' ';
            }
        }
        for (k, t) in self.teleports.iter().enumerate() {
            let mark = char::from_digit((k % 10) as u32, 10).unwrap_or('T');
            for end in [t.a as usize, t.b as usize] {
                rows[2 * (end / n) + 1][2 * (end % n) + 1] = mark;
            }
        }
        rows[1][1] = 'S';
        rows[2 * n - 1][2 * n - 1] = 'G';
        rows.into_iter()
            .map(|r| r.into_iter().collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Down,
    Left,
    Right,
    Up,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::Up,
    ];
}

fn open_between(passages: &mut [u8], n: usize, a: usize, b: usize) {
    let (lo, hi) = (a.min(b), a.max(b));
    if hi == lo + 1 {
        passages[lo] |= EAST;
    } else {
        debug_assert_eq!(hi, lo + n);
        passages[lo] |= SOUTH;
    }
}
