use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DomainError, StateId};

const BITS: u32 = 5;

/// Tile layout in row-major order; `0` is the blank.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PuzzleState {
    pub tiles: Vec<u8>,
}

/// `size x size` sliding-tile puzzle. The goal is the identity layout
/// `[0, 1, 2, ...]` with the blank in the upper-left corner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlidingPuzzle {
    pub size: u32,
    pub initial: Vec<u8>,
}

impl SlidingPuzzle {
    pub fn new(size: u32, initial: Vec<u8>) -> Result<Self, DomainError> {
        if !(2..=5).contains(&size) {
            return Err(DomainError::InvalidParams {
                domain: "sliding_puzzle",
                reason: format!("size must be in 2..=5, got {size}"),
            });
        }
        let p = SlidingPuzzle { size, initial };
        p.encode(&PuzzleState {
            tiles: p.initial.clone(),
        })?;
        Ok(p)
    }

    /// Scrambles the goal layout with a random walk of `moves` blank moves
    /// that never immediately undoes the previous move.
    pub fn scrambled<R: Rng>(size: u32, moves: usize, rng: &mut R) -> Result<Self, DomainError> {
        let goal = Self::new(size, (0..(size * size) as u8).collect())?;
        let mut tiles = goal.initial.clone();
        let n = size as usize;
        let mut blank = 0usize;
        let mut prev: Option<usize> = None;
        for _ in 0..moves {
            let options: Vec<usize> = neighbours(blank, n)
                .into_iter()
                .flatten()
                .filter(|&c| Some(c) != prev)
                .collect();
            let next = options[rng.gen_range(0..options.len())];
            tiles.swap(blank, next);
            prev = Some(blank);
            blank = next;
        }
        Self::new(size, tiles)
    }

    pub fn encode(&self, state: &PuzzleState) -> Result<StateId, DomainError> {
        let cells = (self.size * self.size) as usize;
        let mut seen = vec![false; cells];
        let valid = state.tiles.len() == cells
            && state.tiles.iter().all(|&t| {
                let t = t as usize;
                t < cells && !std::mem::replace(&mut seen[t], true)
            });
        if !valid {
            return Err(DomainError::InvalidParams {
                domain: "sliding_puzzle",
                reason: format!("{:?} is not a permutation of 0..{cells}", state.tiles),
            });
        }
        Ok(StateId(
            state.tiles.iter().enumerate().fold(0u128, |acc, (i, &t)| {
                acc | (u128::from(t) << (BITS * i as u32))
            }),
        ))
    }

    pub fn decode(&self, s: StateId) -> Result<PuzzleState, DomainError> {
        let cells = (self.size * self.size) as usize;
        let tiles: Vec<u8> = (0..cells)
            .map(|i| ((s.0 >> (BITS * i as u32)) & 0x1f) as u8)
            .collect();
        let state = PuzzleState { tiles };
        let back = self.encode(&state).map_err(|e| DomainError::Encoding {
            domain: "sliding_puzzle",
            state: s,
            reason: e.to_string(),
        })?;
        if back != s {
            return Err(DomainError::Encoding {
                domain: "sliding_puzzle",
                state: s,
                reason: "stray high bits".into(),
            });
        }
        Ok(state)
    }

    pub fn goal(&self) -> StateId {
        StateId(
            (0..(self.size * self.size) as u128)
                .fold(0u128, |acc, t| acc | (t << (BITS as u128 * t))),
        )
    }

    pub(crate) fn initial_state(&self) -> StateId {
        self.encode(&PuzzleState {
            tiles: self.initial.clone(),
        })
        .expect("validated on construction")
    }

    /// Blank moves in lexicographic order: down, left, right, up.
    pub(crate) fn successors_into(
        &self,
        s: StateId,
        out: &mut Vec<(StateId, f64)>,
    ) -> Result<(), DomainError> {
        let state = self.decode(s)?;
        let n = self.size as usize;
        let blank = state
            .tiles
            .iter()
            .position(|&t| t == 0)
            .expect("permutation");
        for next in neighbours(blank, n).into_iter().flatten() {
            // swapping two 5-bit fields in place
            let shift_b = BITS * blank as u32;
            let shift_n = BITS * next as u32;
            let tile = (s.0 >> shift_n) & 0x1f;
            let packed = (s.0 & !(0x1f << shift_n)) | (tile << shift_b);
            out.push((StateId(packed), 1.0));
        }
        Ok(())
    }

    pub(crate) fn is_goal(&self, s: StateId) -> bool {
        s == self.goal()
    }

    /// Sum of Manhattan displacements of all non-blank tiles.
    pub fn manhattan(&self, s: StateId) -> Result<u32, DomainError> {
        Ok(self.displacements(&self.decode(s)?).iter().sum())
    }

    fn displacements(&self, state: &PuzzleState) -> Vec<u32> {
        let n = self.size;
        let mut out = vec![0u32; (n * n) as usize - 1];
        for (pos, &t) in state.tiles.iter().enumerate() {
            if t == 0 {
                continue;
            }
            let (pos, t) = (pos as u32, u32::from(t));
            out[t as usize - 1] = (pos / n).abs_diff(t / n) + (pos % n).abs_diff(t % n);
        }
        out
    }

    pub(crate) fn feature_dim(&self) -> usize {
        (self.size * self.size) as usize + 1
    }

    /// `[total Manhattan, misplaced tiles, then the Manhattan displacement of
    /// tile 1, 2, ...]`.
    pub(crate) fn features(&self, s: StateId) -> Result<Vec<f64>, DomainError> {
        let state = self.decode(s)?;
        let disp = self.displacements(&state);
        let mut out = Vec::with_capacity(self.feature_dim());
        out.push(f64::from(disp.iter().sum::<u32>()));
        out.push(disp.iter().filter(|&&d| d > 0).count() as f64);
        out.extend(disp.iter().map(|&d| f64::from(d)));
        Ok(out)
    }
}

/// Cells adjacent to `cell` in the order down, left, right, up.
fn neighbours(cell: usize, n: usize) -> [Option<usize>; 4] {
    let (r, c) = (cell / n, cell % n);
    [
        (r + 1 < n).then(|| cell + n),
        (c > 0).then(|| cell - 1),
        (c + 1 < n).then(|| cell + 1),
        (r > 0).then(|| cell - n),
    ]
}
