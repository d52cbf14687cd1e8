//! Losses over per-state heuristic values, each with its gradient with
//! respect to those values. Models apply the chain rule on top.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domains::StateId;
use crate::trace::TrainingRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Logistic ranking loss for A*.
    Lstar,
    /// Logistic ranking loss for greedy best-first search.
    Lgbfs,
    /// Logistic loss on consecutive plan states.
    Lrt,
    /// Squared error to the exact cost-to-goal.
    L2,
    /// Bellman hinge plus a band around the cost-to-goal.
    Lbe,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Lstar,
        LossKind::Lgbfs,
        LossKind::Lrt,
        LossKind::L2,
        LossKind::Lbe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Lstar => "lstar",
            LossKind::Lgbfs => "lgbfs",
            LossKind::Lrt => "lrt",
            LossKind::L2 => "l2",
            LossKind::Lbe => "lbe",
        }
    }

    /// `(alpha, beta)` the loss is built for; A* merit for the others.
    pub fn merit(self) -> (f64, f64) {
        match self {
            LossKind::Lgbfs => (0.0, 1.0),
            _ => (1.0, 1.0),
        }
    }

    pub fn needs_labels(self) -> bool {
        matches!(self, LossKind::L2 | LossKind::Lbe)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LossKind {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| LossError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("{loss} expects {expected} records, got {found}")]
    RecordKind {
        loss: &'static str,
        expected: &'static str,
        found: &'static str,
    },
    #[error("no heuristic value for state {0}")]
    MissingValue(StateId),
    #[error("ranking losses need beta > 0, got {0}")]
    NonPositiveBeta(f64),
    #[error("unknown loss `{0}`")]
    UnknownKind(String),
}

/// Loss value and its gradient with respect to each heuristic value read.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossValueGrad {
    pub value: f64,
    pub grad: HashMap<StateId, f64>,
}

impl LossValueGrad {
    fn add(&mut self, s: StateId, d: f64) {
        *self.grad.entry(s).or_insert(0.0) += d;
    }

    /// Sums values and gradients.
    pub fn merge(&mut self, other: LossValueGrad) {
        self.value += other.value;
        for (s, d) in other.grad {
            self.add(s, d);
        }
    }
}

/// Records plus the heuristic values they are scored against.
#[derive(Clone, Copy, Debug)]
pub struct LossBatch<'a> {
    pub records: &'a [TrainingRecord],
    pub h: &'a HashMap<StateId, f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl<'a> LossBatch<'a> {
    fn h(&self, s: StateId) -> Result<f64, LossError> {
        self.h.get(&s).copied().ok_or(LossError::MissingValue(s))
    }
}

fn kind_name(r: &TrainingRecord) -> &'static str {
    match r {
        TrainingRecord::Pair { .. } => "pair",
        TrainingRecord::PathTransition { .. } => "path_transition",
        TrainingRecord::LabeledState { .. } => "labeled_state",
        TrainingRecord::ParentChildren { .. } => "parent_children",
    }
}

fn wrong(loss: &'static str, expected: &'static str, r: &TrainingRecord) -> LossError {
    LossError::RecordKind {
        loss,
        expected,
        found: kind_name(r),
    }
}

/// `alpha (g_i - g_j) + beta (h_i - h_j)`; positive means `s_j` has the
/// smaller merit.
pub fn r_value(g_i: f64, g_j: f64, h_i: f64, h_j: f64, alpha: f64, beta: f64) -> f64 {
    alpha * (g_i - g_j) + beta * (h_i - h_j)
}

/// `ln(1 + e^x)` without overflow or loss of precision for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + e^-x)`, the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Number of violated pairs. A pair is violated when `r >= 0`, or `r > 0`
/// when `paper_strict` is set. Non-pair records are ignored.
pub fn loss_l01(batch: &LossBatch<'_>, paper_strict: bool) -> Result<usize, LossError> {
    let mut count = 0;
    for rec in batch.records {
        if let TrainingRecord::Pair {
            s_i, s_j, g_i, g_j, ..
        } = *rec
        {
            let r = r_value(
                g_i,
                g_j,
                batch.h(s_i)?,
                batch.h(s_j)?,
                batch.alpha,
                batch.beta,
            );
            if r > 0.0 || (!paper_strict && r == 0.0) {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Sum of `softplus(r)` over pair records.
pub fn loss_rank_logistic(batch: &LossBatch<'_>) -> Result<LossValueGrad, LossError> {
    if !(batch.beta > 0.0) {
        return Err(LossError::NonPositiveBeta(batch.beta));
    }
    let mut out = LossValueGrad::default();
    for rec in batch.records {
        let TrainingRecord::Pair {
            s_i, s_j, g_i, g_j, ..
        } = *rec
        else {
            return Err(wrong("rank_logistic", "pair", rec));
        };
        let r = r_value(
            g_i,
            g_j,
            batch.h(s_i)?,
            batch.h(s_j)?,
            batch.alpha,
            batch.beta,
        );
        out.value += softplus(r);
        let d = batch.beta * sigmoid(r);
        out.add(s_i, d);
        out.add(s_j, -d);
    }
    Ok(out)
}

/// Sum of `(h - h*)^2` over labeled states.
pub fn loss_l2(batch: &LossBatch<'_>) -> Result<LossValueGrad, LossError> {
    let mut out = LossValueGrad::default();
    for rec in batch.records {
        let TrainingRecord::LabeledState { state, h_star, .. } = *rec else {
            return Err(wrong("l2", "labeled_state", rec));
        };
        let e = batch.h(state)? - h_star;
        out.value += e * e;
        out.add(state, 2.0 * e);
    }
    Ok(out)
}

/// Sum of `softplus(h(child) - h(parent))` over plan transitions.
pub fn loss_rt(batch: &LossBatch<'_>) -> Result<LossValueGrad, LossError> {
    let mut out = LossValueGrad::default();
    for rec in batch.records {
        let TrainingRecord::PathTransition { parent, child } = *rec else {
            return Err(wrong("rt", "path_transition", rec));
        };
        let x = batch.h(child)? - batch.h(parent)?;
        out.value += softplus(x);
        let d = sigmoid(x);
        out.add(child, d);
        out.add(parent, -d);
    }
    Ok(out)
}

/// Per plan state: `max(1 + min_child h - h, 0) + max(h* - h, 0) + max(h - 2h*, 0)`.
///
/// The Bellman term is dropped for states without children. The minimum
/// picks the lowest `StateId` among tied children; hinges have gradient 0 at
/// the kink.
pub fn loss_be(batch: &LossBatch<'_>) -> Result<LossValueGrad, LossError> {
    let mut out = LossValueGrad::default();
    for rec in batch.records {
        let TrainingRecord::ParentChildren {
            state,
            h_star,
            ref children,
        } = *rec
        else {
            return Err(wrong("be", "parent_children", rec));
        };
        let h = batch.h(state)?;
        let mut best: Option<(f64, StateId)> = None;
        for &c in children {
            let hc = batch.h(c)?;
            let better = match best {
                None => true,
                Some((bh, bs)) => hc < bh || (hc == bh && c < bs),
            };
            if better {
                best = Some((hc, c));
            }
        }
        if let Some((hc, c)) = best {
            let b = 1.0 + hc - h;
            if b > 0.0 {
                out.value += b;
                out.add(c, 1.0);
                out.add(state, -1.0);
            }
        }
        if h_star - h > 0.0 {
            out.value += h_star - h;
            out.add(state, -1.0);
        }
        if h - 2.0 * h_star > 0.0 {
            out.value += h - 2.0 * h_star;
            out.add(state, 1.0);
        }
        out.grad.entry(state).or_insert(0.0);
    }
    Ok(out)
}

/// Dispatches to the loss for `kind`.
pub fn evaluate_loss(kind: LossKind, batch: &LossBatch<'_>) -> Result<LossValueGrad, LossError> {
    match kind {
        LossKind::Lstar | LossKind::Lgbfs => loss_rank_logistic(batch),
        LossKind::Lrt => loss_rt(batch),
        LossKind::L2 => loss_l2(batch),
        LossKind::Lbe => loss_be(batch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(i: u128, j: u128, g_i: f64, g_j: f64) -> TrainingRecord {
        TrainingRecord::Pair {
            step: 1,
            s_i: StateId(i),
            s_j: StateId(j),
            g_i,
            g_j,
        }
    }

    fn hmap(vals: &[(u128, f64)]) -> HashMap<StateId, f64> {
        vals.iter().map(|&(s, v)| (StateId(s), v)).collect()
    }

    fn batch<'a>(
        records: &'a [TrainingRecord],
        h: &'a HashMap<StateId, f64>,
        alpha: f64,
    ) -> LossBatch<'a> {
        LossBatch {
            records,
            h,
            alpha,
            beta: 1.0,
        }
    }

    #[test]
    fn r_value_examples() {
        assert_eq!(r_value(3.0, 3.0, 2.0, 2.0, 1.0, 1.0), 0.0);
        assert_eq!(r_value(2.0, 8.0, 8.0, 3.0, 1.0, 1.0), -1.0);
        assert_eq!(r_value(2.0, 8.0, 8.0, 3.0, 0.0, 2.0), 10.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-100.0) < 1e-40);
        assert!(softplus(-1000.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn logistic_single_pair() {
        let recs = [pair(0, 1, 1.0, 1.0)];
        let h = hmap(&[(0, 2.0), (1, 2.0)]);
        let out = loss_rank_logistic(&batch(&recs, &h, 1.0)).unwrap();
        assert!((out.value - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(out.grad[&StateId(0)], 0.5);
        assert_eq!(out.grad[&StateId(1)], -0.5);

        let h = hmap(&[(0, 0.0), (1, 100.0)]);
        let out = loss_rank_logistic(&batch(&recs, &h, 1.0)).unwrap();
        assert!(out.value < 1e-40);
        assert!(out.grad[&StateId(0)].abs() < 1e-40);
    }

    #[test]
    fn logistic_rejects_bad_inputs() {
        let h = hmap(&[(0, 0.0), (1, 0.0)]);
        let recs = [pair(0, 1, 0.0, 0.0)];
        let mut b = batch(&recs, &h, 1.0);
        b.beta = 0.0;
        assert_eq!(loss_rank_logistic(&b), Err(LossError::NonPositiveBeta(0.0)));
        let recs = [TrainingRecord::PathTransition {
            parent: StateId(0),
            child: StateId(1),
        }];
        assert!(matches!(
            loss_rank_logistic(&batch(&recs, &h, 1.0)),
            Err(LossError::RecordKind { .. })
        ));
        let recs = [pair(0, 7, 0.0, 0.0)];
        assert_eq!(
            loss_rank_logistic(&batch(&recs, &h, 1.0)),
            Err(LossError::MissingValue(StateId(7)))
        );
    }

    #[test]
    fn l01_boundary() {
        let recs = [pair(0, 1, 1.0, 1.0), pair(0, 2, 1.0, 1.0)];
        let h = hmap(&[(0, 1.0), (1, 1.0), (2, 2.0)]);
        let b = batch(&recs, &h, 1.0);
        assert_eq!(loss_l01(&b, false).unwrap(), 1);
        assert_eq!(loss_l01(&b, true).unwrap(), 0);
    }

    #[test]
    fn l2_examples() {
        let recs = [TrainingRecord::LabeledState {
            state: StateId(0),
            h_star: 3.0,
            capped: false,
        }];
        let h = hmap(&[(0, 5.0)]);
        let out = loss_l2(&batch(&recs, &h, 1.0)).unwrap();
        assert_eq!(out.value, 4.0);
        assert_eq!(out.grad[&StateId(0)], 4.0);
        let h = hmap(&[(0, 3.0)]);
        let out = loss_l2(&batch(&recs, &h, 1.0)).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grad[&StateId(0)], 0.0);
    }

    #[test]
    fn rt_examples() {
        let recs: Vec<_> = (0..3)
            .map(|k| TrainingRecord::PathTransition {
                parent: StateId(k),
                child: StateId(k + 1),
            })
            .collect();
        let flat = hmap(&[(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)]);
        let out = loss_rt(&batch(&recs, &flat, 1.0)).unwrap();
        assert!((out.value - 3.0 * std::f64::consts::LN_2).abs() < 1e-14);
        let steep = hmap(&[(0, 30.0), (1, 20.0), (2, 10.0), (3, 0.0)]);
        let out = loss_rt(&batch(&recs, &steep, 1.0)).unwrap();
        assert!(out.value < 3.0 * 5e-5);
    }

    #[test]
    fn be_examples() {
        let rec = |h_star| TrainingRecord::ParentChildren {
            state: StateId(0),
            h_star,
            children: vec![StateId(1), StateId(2)],
        };
        let recs = [rec(4.0)];
        let h = hmap(&[(0, 4.0), (1, 3.0), (2, 5.0)]);
        let out = loss_be(&batch(&recs, &h, 1.0)).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad.values().all(|&d| d == 0.0));

        let recs = [rec(0.0)];
        let h = hmap(&[(0, 0.0), (1, 0.0), (2, 0.0)]);
        let out = loss_be(&batch(&recs, &h, 1.0)).unwrap();
        assert_eq!(out.value, 1.0);
        // Tie between children goes to the lower id.
        assert_eq!(out.grad[&StateId(1)], 1.0);
        assert!(!out.grad.contains_key(&StateId(2)));

        let leaf = [TrainingRecord::ParentChildren {
            state: StateId(0),
            h_star: 2.0,
            children: vec![],
        }];
        let h = hmap(&[(0, 5.0)]);
        let out = loss_be(&batch(&leaf, &h, 1.0)).unwrap();
        assert_eq!(out.value, 1.0);
        assert_eq!(out.grad[&StateId(0)], 1.0);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.as_str().parse::<LossKind>().unwrap(), k);
            assert_eq!(serde_json::to_value(k).unwrap(), k.as_str());
        }
        assert!("l3".parse::<LossKind>().is_err());
    }

    fn pairs_strategy() -> impl Strategy<Value = (Vec<TrainingRecord>, HashMap<StateId, f64>)> {
        (
            prop::collection::vec((0u128..8, 0u128..8, 0.0f64..10.0, 0.0f64..10.0), 1..30),
            prop::collection::vec(-20.0f64..20.0, 8),
        )
            .prop_map(|(ps, hs)| {
                let recs = ps
                    .into_iter()
                    .filter(|p| p.0 != p.1)
                    .map(|(i, j, gi, gj)| pair(i, j, gi, gj))
                    .collect();
                let h = hs
                    .into_iter()
                    .enumerate()
                    .map(|(k, v)| (StateId(k as u128), v))
                    .collect();
                (recs, h)
            })
    }

    proptest! {
        #[test]
        fn ranking_losses_ignore_a_shift((recs, h) in pairs_strategy(), c in -50.0f64..50.0, alpha in 0.0f64..2.0) {
            let shifted: HashMap<_, _> = h.iter().map(|(&s, &v)| (s, v + c)).collect();
            let a = loss_rank_logistic(&batch(&recs, &h, alpha)).unwrap();
            let b = loss_rank_logistic(&batch(&recs, &shifted, alpha)).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-12 * (1.0 + a.value.abs()));
            prop_assert_eq!(loss_l01(&batch(&recs, &h, alpha), false).unwrap(),
                            loss_l01(&batch(&recs, &shifted, alpha), false).unwrap());
        }

        #[test]
        fn losses_add_over_concatenated_batches((r1, h) in pairs_strategy(), (r2, _) in pairs_strategy()) {
            let joint: Vec<_> = r1.iter().chain(&r2).cloned().collect();
            let a = loss_rank_logistic(&batch(&r1, &h, 1.0)).unwrap();
            let b = loss_rank_logistic(&batch(&r2, &h, 1.0)).unwrap();
            let ab = loss_rank_logistic(&batch(&joint, &h, 1.0)).unwrap();
            let mut sum = a.clone();
            sum.merge(b);
            prop_assert!((sum.value - ab.value).abs() < 1e-9);
            for (s, d) in &ab.grad {
                prop_assert!((sum.grad[s] - d).abs() < 1e-9);
            }
        }

        #[test]
        fn logistic_bounds_zero_one((recs, h) in pairs_strategy(), alpha in 0.0f64..2.0) {
            // Every violated pair contributes at least ln 2.
            let b = batch(&recs, &h, alpha);
            let v = loss_rank_logistic(&b).unwrap().value;
            let n = loss_l01(&b, false).unwrap() as f64;
            prop_assert!(v + 1e-12 >= n * std::f64::consts::LN_2);
        }
    }
}
