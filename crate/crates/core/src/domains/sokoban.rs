use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DomainError, StateId};

/// Decoded Sokoban-lite state. `boxes` is kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SokobanState {
    pub agent: u8,
    pub boxes: Vec<u8>,
}

/// Small Sokoban room (at most 15x15 cells, at most 3 boxes), without
/// deadlock pruning. Cells are indexed row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SokobanLite {
    pub width: u32,
    pub height: u32,
    /// One string per row, `#` for walls and anything else for floor.
    pub walls: Vec<String>,
    pub goals: Vec<u8>,
    pub agent: u8,
    pub boxes: Vec<u8>,
}

pub const MAX_BOXES: usize = 3;

impl SokobanLite {
    /// Parses a level drawn with `#` walls, `@` agent, `$` boxes, `.` goals,
    /// `*` box on goal and `+` agent on goal.
    pub fn parse(level: &str) -> Result<Self, DomainError> {
        let lines: Vec<&str> = level.lines().filter(|l| !l.trim().is_empty()).collect();
        let height = lines.len() as u32;
        let width = lines.iter().map(|l| l.len()).max().unwrap_or(0) as u32;
        let mut walls = Vec::with_capacity(lines.len());
        let (mut goals, mut boxes, mut agent) = (Vec::new(), Vec::new(), None);
        for (r, line) in lines.iter().enumerate() {
            let mut row = String::with_capacity(width as usize);
            for c in 0..width as usize {
                let ch = line.as_bytes().get(c).copied().unwrap_or(b' ');
                let cell = (r * width as usize + c) as u8;
                row.push(if ch == b'#' { '#' } else { ' ' });
                match ch {
                    b'@' => agent = Some(cell),
                    b'+' => {
                        agent = Some(cell);
                        goals.push(cell);
                    }
                    b'$' => boxes.push(cell),
                    b'*' => {
                        boxes.push(cell);
                        goals.push(cell);
                    }
                    b'.' => goals.push(cell),
                    _ => {}
                }
            }
            walls.push(row);
        }
        let agent = agent.ok_or_else(|| invalid("level has no agent"))?;
        Self::new(width, height, walls, goals, agent, boxes)
    }

    pub fn new(
        width: u32,
        height: u32,
        walls: Vec<String>,
        goals: Vec<u8>,
        agent: u8,
        mut boxes: Vec<u8>,
    ) -> Result<Self, DomainError> {
        if width < 3 || height < 3 || width * height > 255 {
            return Err(invalid(format!(
                "room {width}x{height} must be at least 3x3 and have at most 255 cells"
            )));
        }
        if boxes.is_empty() || boxes.len() > MAX_BOXES {
            return Err(invalid(format!(
                "1..={MAX_BOXES} boxes required, got {}",
                boxes.len()
            )));
        }
        if goals.len() != boxes.len() {
            return Err(invalid(format!(
                "{} goals for {} boxes",
                goals.len(),
                boxes.len()
            )));
        }
        boxes.sort_unstable();
        let room = SokobanLite {
            width,
            height,
            walls,
            goals,
            agent,
            boxes,
        };
        if room.walls.len() != height as usize
            || room.walls.iter().any(|r| r.len() != width as usize)
        {
            return Err(invalid("wall rows do not match the room size"));
        }
        room.encode(&SokobanState {
            agent: room.agent,
            boxes: room.boxes.clone(),
        })?;
        Ok(room)
    }

    /// Random room built backwards: boxes start on their goals and the agent
    /// pulls them around for `pulls` random steps.
    pub fn generate<R: Rng>(
        size: u32,
        box_count: usize,
        pulls: usize,
        rng: &mut R,
    ) -> Result<Self, DomainError> {
        if !(4..=15).contains(&size) {
            return Err(invalid(format!("size must be in 4..=15, got {size}")));
        }
        if box_count == 0 || box_count > MAX_BOXES {
            return Err(invalid(format!("1..={MAX_BOXES} boxes required")));
        }
        let n = size as usize;
        let mut wall = vec![false; n * n];
        for cell in 0..n * n {
            let (r, c) = (cell / n, cell % n);
            if r == 0 || c == 0 || r + 1 == n || c + 1 == n {
                wall[cell] = true;
            }
        }
        let interior: Vec<usize> = (0..n * n).filter(|&c| !wall[c]).collect();
        // sprinkle a few pillars
        let pillars = interior.len() / 10;
        for &c in interior.choose_multiple(rng, pillars) {
            wall[c] = true;
        }
        let floor: Vec<usize> = (0..n * n).filter(|&c| !wall[c]).collect();
        if floor.len() < box_count + 1 {
            return Err(invalid("room too small"));
        }
        let picks: Vec<usize> = floor.choose_multiple(rng, box_count + 1).copied().collect();
        let goals: Vec<u8> = picks[..box_count].iter().map(|&c| c as u8).collect();
        let mut boxes: Vec<usize> = picks[..box_count].to_vec();
        let mut agent = picks[box_count];

        let dirs: [isize; 4] = [n as isize, -1, 1, -(n as isize)];
        for _ in 0..pulls {
            let d = *dirs.choose(rng).expect("non-empty");
            let to = agent as isize + d;
            let to = to as usize;
            if wall[to] || boxes.contains(&to) {
                continue;
            }
            let behind = (agent as isize - d) as usize;
            if let Some(b) = boxes.iter().position(|&b| b == behind) {
                if rng.gen_bool(0.7) {
                    boxes[b] = agent;
                }
            }
            agent = to;
        }
        let walls = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| if wall[r * n + c] { '#' } else { ' ' })
                    .collect()
            })
            .collect();
        Self::new(
            size,
            size,
            walls,
            goals,
            agent as u8,
            boxes.into_iter().map(|b| b as u8).collect(),
        )
    }

    pub fn is_wall(&self, cell: u8) -> bool {
        let (r, c) = (cell as u32 / self.width, cell as u32 % self.width);
        r >= self.height || self.walls[r as usize].as_bytes()[c as usize] == b'#'
    }

    pub fn encode(&self, state: &SokobanState) -> Result<StateId, DomainError> {
        let cells = (self.width * self.height) as u8;
        let mut boxes = state.boxes.clone();
        boxes.sort_unstable();
        let distinct = boxes.windows(2).all(|w| w[0] != w[1]);
        if boxes.len() != self.goals.len()
            || !distinct
            || state.agent >= cells
            || self.is_wall(state.agent)
            || boxes
                .iter()
                .any(|&b| b >= cells || self.is_wall(b) || b == state.agent)
        {
            return Err(invalid(format!(
                "agent {} with boxes {:?} is not a legal placement",
                state.agent, state.boxes
            )));
        }
        let mut packed = u128::from(state.agent);
        for (i, &b) in boxes.iter().enumerate() {
            packed |= u128::from(b) << (8 * (i + 1));
        }
        Ok(StateId(packed))
    }

    pub fn decode(&self, s: StateId) -> Result<SokobanState, DomainError> {
        let k = self.goals.len();
        let state = SokobanState {
            agent: (s.0 & 0xff) as u8,
            boxes: (0..k)
                .map(|i| ((s.0 >> (8 * (i + 1))) & 0xff) as u8)
                .collect(),
        };
        match self.encode(&state) {
            Ok(back) if back == s => Ok(state),
            Ok(_) => Err(DomainError::Encoding {
                domain: "sokoban_lite",
                state: s,
                reason: "non-canonical box order or stray bits".into(),
            }),
            Err(e) => Err(DomainError::Encoding {
                domain: "sokoban_lite",
                state: s,
                reason: e.to_string(),
            }),
        }
    }

    pub(crate) fn initial_state(&self) -> StateId {
        self.encode(&SokobanState {
            agent: self.agent,
            boxes: self.boxes.clone(),
        })
        .expect("validated on construction")
    }

    /// Agent moves in lexicographic order: down, left, right, up. A move onto a
    /// box pushes it when the cell behind is free.
    pub(crate) fn successors_into(
        &self,
        s: StateId,
        out: &mut Vec<(StateId, f64)>,
    ) -> Result<(), DomainError> {
        let state = self.decode(s)?;
        let w = self.width as i32;
        for d in [w, -1, 1, -w] {
            let Some(to) = self.step(state.agent, d) else {
                continue;
            };
            if self.is_wall(to) {
                continue;
            }
            let mut boxes = state.boxes.clone();
            if let Some(b) = boxes.iter().position(|&b| b == to) {
                let Some(beyond) = self.step(to, d) else {
                    continue;
                };
                if self.is_wall(beyond) || boxes.contains(&beyond) {
                    continue;
                }
                boxes[b] = beyond;
            }
            let next = self.encode(&SokobanState { agent: to, boxes })?;
            out.push((next, 1.0));
        }
        Ok(())
    }

    /// Neighbouring cell in direction `d` (a row-major offset), if inside the room.
    fn step(&self, cell: u8, d: i32) -> Option<u8> {
        let w = self.width as i32;
        let (r, c) = (i32::from(cell) / w, i32::from(cell) % w);
        let (nr, nc) = match d {
            d if d == w => (r + 1, c),
            d if d == -w => (r - 1, c),
            -1 => (r, c - 1),
            1 => (r, c + 1),
            _ => return None,
        };
        if nr < 0 || nc < 0 || nr >= self.height as i32 || nc >= w {
            return None;
        }
        Some((nr * w + nc) as u8)
    }

    pub(crate) fn is_goal(&self, s: StateId) -> bool {
        let k = self.goals.len();
        (0..k).all(|i| {
            let b = ((s.0 >> (8 * (i + 1))) & 0xff) as u8;
            self.goals.contains(&b)
        })
    }

    fn manhattan(&self, a: u8, b: u8) -> u32 {
        let w = self.width;
        let (a, b) = (u32::from(a), u32::from(b));
        (a / w).abs_diff(b / w) + (a % w).abs_diff(b % w)
    }

    /// Minimum-cost assignment of boxes to goals under Manhattan distance.
    pub fn matching_bound(&self, boxes: &[u8]) -> u32 {
        let mut goals = self.goals.clone();
        let mut best = u32::MAX;
        permute(&mut goals, 0, &mut |perm| {
            let cost = boxes
                .iter()
                .zip(perm)
                .map(|(&b, &g)| self.manhattan(b, g))
                .sum();
            best = best.min(cost);
        });
        best
    }

    /// True when some box sits in a corner that is not a goal.
    pub fn has_corner_deadlock(&self, s: StateId) -> bool {
        let Ok(state) = self.decode(s) else {
            return false;
        };
        let w = self.width as i32;
        state.boxes.iter().any(|&b| {
            if self.goals.contains(&b) {
                return false;
            }
            let blocked = |d: i32| self.step(b, d).map_or(true, |c| self.is_wall(c));
            (blocked(w) || blocked(-w)) && (blocked(1) || blocked(-1))
        })
    }

    pub(crate) fn feature_dim(&self) -> usize {
        5
    }

    /// `[box-to-goal matching bound, agent-to-nearest-box distance, boxes on
    /// goals, agent row / (height-1), agent col / (width-1)]`.
    pub(crate) fn features(&self, s: StateId) -> Result<Vec<f64>, DomainError> {
        let state = self.decode(s)?;
        let nearest = state
            .boxes
            .iter()
            .map(|&b| self.manhattan(state.agent, b))
            .min()
            .unwrap_or(0);
        let on_goal = state
            .boxes
            .iter()
            .filter(|b| self.goals.contains(b))
            .count();
        let (r, c) = (
            u32::from(state.agent) / self.width,
            u32::from(state.agent) % self.width,
        );
        Ok(vec![
            f64::from(self.matching_bound(&state.boxes)),
            f64::from(nearest),
            on_goal as f64,
            f64::from(r) / f64::from(self.height - 1),
            f64::from(c) / f64::from(self.width - 1),
        ])
    }
}

fn invalid(reason: impl Into<String>) -> DomainError {
    DomainError::InvalidParams {
        domain: "sokoban_lite",
        reason: reason.into(),
    }
}

fn permute(items: &mut Vec<u8>, k: usize, visit: &mut impl FnMut(&[u8])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
