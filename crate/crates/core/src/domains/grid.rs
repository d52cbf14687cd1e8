use serde::{Deserialize, Serialize};

use super::{DomainError, StateId};

/// Obstacle-free square grid where the agent may only decrease one
/// coordinate per move. Start `(size-1, size-1)`, goal `(0, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnewayGrid {
    pub size: u32,
}

impl OnewayGrid {
    pub fn new(size: u32) -> Result<Self, DomainError> {
        if !(2..=1 << 15).contains(&size) {
            return Err(DomainError::InvalidParams {
                domain: "oneway_grid",
                reason: format!("size must be in 2..=32768, got {size}"),
            });
        }
        Ok(OnewayGrid { size })
    }

    pub fn encode(x: u32, y: u32) -> StateId {
        StateId(u128::from(x) | (u128::from(y) << 32))
    }

    pub fn decode(s: StateId) -> (u32, u32) {
        (
            (s.0 & 0xffff_ffff) as u32,
            ((s.0 >> 32) & 0xffff_ffff) as u32,
        )
    }

    fn check(&self, s: StateId) -> Result<(u32, u32), DomainError> {
        let (x, y) = Self::decode(s);
        if s.0 >> 64 != 0 || x >= self.size || y >= self.size {
            return Err(DomainError::Encoding {
                domain: "oneway_grid",
                state: s,
                reason: format!("coordinates outside a {0}x{0} grid", self.size),
            });
        }
        Ok((x, y))
    }

    pub(crate) fn initial_state(&self) -> StateId {
        Self::encode(self.size - 1, self.size - 1)
    }

    /// Actions `x-` then `y-`, i.e. effects (-1, 0) and (0, -1).
    pub(crate) fn successors_into(
        &self,
        s: StateId,
        out: &mut Vec<(StateId, f64)>,
    ) -> Result<(), DomainError> {
        let (x, y) = self.check(s)?;
        if x > 0 {
            out.push((Self::encode(x - 1, y), 1.0));
        }
        if y > 0 {
            out.push((Self::encode(x, y - 1), 1.0));
        }
        Ok(())
    }

    pub(crate) fn is_goal(&self, s: StateId) -> bool {
        s == Self::encode(0, 0)
    }

    pub(crate) fn manhattan(&self, s: StateId) -> u32 {
        let (x, y) = Self::decode(s);
        x + y
    }

    pub(crate) fn feature_dim(&self) -> usize {
        3
    }

    /// `[Manhattan distance to goal, x / (size-1), y / (size-1)]`.
    pub(crate) fn features(&self, s: StateId) -> Result<Vec<f64>, DomainError> {
        let (x, y) = self.check(s)?;
        let span = f64::from(self.size - 1);
        Ok(vec![
            f64::from(x + y),
            f64::from(x) / span,
            f64::from(y) / span,
        ])
    }

    pub(crate) fn all_states(&self) -> Vec<StateId> {
        (0..self.size)
            .flat_map(|y| (0..self.size).map(move |x| Self::encode(x, y)))
            .collect()
    }
}
