//! Training loop: one gradient step per instance, instances shuffled every
//! epoch, 0-1 ranking loss reported after each epoch.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domains::StateId;
use crate::losses::{evaluate_loss, loss_l01, LossBatch, LossError, LossKind};
use crate::models::{HeuristicModel, ModelError};
use crate::trace::RecordSet;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("gradient has {grads} entries but the model has {params} parameters")]
    ShapeMismatch { params: usize, grads: usize },
    #[error("record set for {instance} holds {found} records, training expects {expected}")]
    WrongRecords {
        instance: String,
        expected: LossKind,
        found: LossKind,
    },
    #[error("loss diverged at epoch {epoch} on {instance}")]
    Divergence {
        epoch: usize,
        instance: String,
        /// Parameters before the failing step.
        last_good: Box<HeuristicModel>,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    #[default]
    AdaptiveMoment,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd" | "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            "adam" | "adaptive_moment" => Ok(OptimizerKind::AdaptiveMoment),
            other => Err(format!("unknown optimizer `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdaptiveMoment,
            learning_rate: 1e-3,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            learning_rate,
            momentum,
            ..Default::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Per-parameter optimizer memory. Grows with the parameter vector, which
/// tabular models extend as they meet new states.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    first: Vec<f64>,
    second: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    /// One update of `params` in place.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        cfg: &OptimizerConfig,
    ) -> Result<(), TrainError> {
        if params.len() != grads.len() {
            return Err(TrainError::ShapeMismatch {
                params: params.len(),
                grads: grads.len(),
            });
        }
        self.first.resize(params.len(), 0.0);
        self.t += 1;
        let lr = cfg.learning_rate;
        match cfg.kind {
            OptimizerKind::SgdMomentum => {
                for ((p, v), g) in params.iter_mut().zip(&mut self.first).zip(grads) {
                    *v = cfg.momentum * *v - lr * g;
                    *p += *v;
                }
            }
            OptimizerKind::AdaptiveMoment => {
                self.second.resize(params.len(), 0.0);
                let c1 = 1.0 - cfg.beta1.powf(self.t as f64);
                let c2 = 1.0 - cfg.beta2.powf(self.t as f64);
                for (((p, m), v), &g) in params
                    .iter_mut()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                    .zip(grads)
                {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Epochs without a better validation 0-1 loss before stopping.
    pub patience: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub alpha: f64,
    pub beta: f64,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<EarlyStop>,
    /// Stop once the training 0-1 loss is at most this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l01_target: Option<usize>,
    /// Count only `r > 0` as a violation.
    #[serde(default)]
    pub paper_strict: bool,
}

impl TrainConfig {
    /// Defaults for `kind`: its own merit, Adam with rate 1e-3, 100 epochs.
    pub fn new(loss_kind: LossKind) -> Self {
        let (alpha, beta) = loss_kind.merit();
        TrainConfig {
            loss_kind,
            alpha,
            beta,
            optimizer: OptimizerConfig::default(),
            epochs: 100,
            seed: 0,
            early_stop: None,
            l01_target: None,
            paper_strict: false,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One training instance: the records the loss consumes and, optionally, the
/// ranking pairs used to report the 0-1 loss (defaults to `records` for the
/// ranking losses).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainItem {
    pub records: RecordSet,
    pub pairs: Option<RecordSet>,
}

impl TrainItem {
    pub fn new(records: RecordSet) -> Self {
        TrainItem {
            records,
            pairs: None,
        }
    }

    pub fn with_pairs(records: RecordSet, pairs: RecordSet) -> Self {
        TrainItem {
            records,
            pairs: Some(pairs),
        }
    }

    fn ranking(&self) -> Option<&RecordSet> {
        self.pairs.as_ref().or(match self.records.loss_kind {
            LossKind::Lstar | LossKind::Lgbfs => Some(&self.records),
            _ => None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochLimit,
    L01Target,
    EarlyStop,
    EmptyTrainingSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Sum of the per-instance surrogate values seen during the epoch.
    pub surrogate: f64,
    pub l01: Option<usize>,
    pub validation_l01: Option<usize>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    pub stop_reason: StopReason,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<String>,
}

impl TrainReport {
    pub fn final_l01(&self) -> Option<usize> {
        self.rows.last().and_then(|r| r.l01)
    }

    /// CSV with header `epoch,surrogate,l01,validation_l01,seconds`. With
    /// `with_time = false` the seconds column is left empty, which makes
    /// reports of identical runs byte-identical.
    pub fn to_csv(&self, with_time: bool) -> String {
        let mut out = String::from("epoch,surrogate,l01,validation_l01,seconds\n");
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let secs = if with_time {
                format!("{:.6}", r.seconds)
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{},{:.12e},{},{},{}\n",
                r.epoch,
                r.surrogate,
                opt(r.l01),
                opt(r.validation_l01),
                secs
            ));
        }
        out
    }
}

fn features_forward(
    model: &HeuristicModel,
    set: &RecordSet,
) -> Result<crate::models::ForwardCache, TrainError> {
    Ok(model.forward(
        &set.instance_id,
        set.states.iter().map(|e| (e.state, e.features.as_slice())),
    )?)
}

/// 0-1 ranking loss of `model` on one pair set.
pub fn l01_of(
    model: &HeuristicModel,
    set: &RecordSet,
    alpha: f64,
    beta: f64,
    paper_strict: bool,
) -> Result<usize, TrainError> {
    let h: HashMap<StateId, f64> = set
        .states
        .iter()
        .map(|e| {
            model
                .evaluate_features(&set.instance_id, e.state, &e.features)
                .map(|v| (e.state, v))
        })
        .collect::<Result<_, _>>()?;
    Ok(loss_l01(
        &LossBatch {
            records: &set.records,
            h: &h,
            alpha,
            beta,
        },
        paper_strict,
    )?)
}

fn total_l01<'a>(
    model: &HeuristicModel,
    sets: impl Iterator<Item = Option<&'a RecordSet>>,
    cfg: &TrainConfig,
) -> Result<Option<usize>, TrainError> {
    let mut total = 0;
    let mut any = false;
    for set in sets.flatten() {
        any = true;
        total += l01_of(model, set, cfg.alpha, cfg.beta, cfg.paper_strict)?;
    }
    Ok(any.then_some(total))
}

/// Trains `model` in place and returns it with a per-epoch report.
///
/// With early stopping the parameters of the best validation epoch are
/// restored before returning.
pub fn train(
    items: &[TrainItem],
    validation: &[TrainItem],
    mut model: HeuristicModel,
    cfg: &TrainConfig,
) -> Result<(HeuristicModel, TrainReport), TrainError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut report = TrainReport {
        rows: Vec::new(),
        stop_reason: StopReason::EpochLimit,
        wall_seconds: 0.0,
        checkpoint_path: None,
    };
    if items.is_empty() {
        report.stop_reason = StopReason::EmptyTrainingSet;
        return Ok((model, report));
    }
    for it in items {
        if it.records.loss_kind != cfg.loss_kind {
            return Err(TrainError::WrongRecords {
                instance: it.records.instance_id.clone(),
                expected: cfg.loss_kind,
                found: it.records.loss_kind,
            });
        }
        model.register_states(
            &it.records.instance_id,
            it.records.states.iter().map(|e| e.state),
        );
        if let Some(p) = &it.pairs {
            model.register_states(&p.instance_id, p.states.iter().map(|e| e.state));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = OptimizerState::default();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut best: Option<(usize, HeuristicModel)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut surrogate = 0.0;
        for &k in &order {
            let set = &items[k].records;
            let cache = features_forward(&model, set)?;
            let out = evaluate_loss(
                cfg.loss_kind,
                &LossBatch {
                    records: &set.records,
                    h: &cache.values,
                    alpha: cfg.alpha,
                    beta: cfg.beta,
                },
            )?;
            if !out.value.is_finite() {
                return Err(TrainError::Divergence {
                    epoch,
                    instance: set.instance_id.clone(),
                    last_good: Box::new(model),
                });
            }
            surrogate += out.value;
            let grads = model.backprop(&cache, &out.grad)?;
            let mut params = model.params().to_vec();
            opt.step(&mut params, &grads, &cfg.optimizer)?;
            if params.iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Divergence {
                    epoch,
                    instance: set.instance_id.clone(),
                    last_good: Box::new(model),
                });
            }
            model.set_params(params)?;
        }

        let l01 = total_l01(&model, items.iter().map(TrainItem::ranking), cfg)?;
        let validation_l01 = total_l01(&model, validation.iter().map(TrainItem::ranking), cfg)?;
        report.rows.push(EpochRow {
            epoch,
            surrogate,
            l01,
            validation_l01,
            seconds: epoch_start.elapsed().as_secs_f64(),
        });

        if let (Some(target), Some(v)) = (cfg.l01_target, l01) {
            if v <= target {
                report.stop_reason = StopReason::L01Target;
                break;
            }
        }
        if let (Some(es), Some(v)) = (cfg.early_stop, validation_l01) {
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= es.patience {
                    report.stop_reason = StopReason::EarlyStop;
                    break;
                }
            }
        }
    }
    if report.stop_reason == StopReason::EarlyStop {
        if let Some((_, m)) = best {
            model = m;
        }
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::fixtures;
    use crate::models::ModelSpec;
    use crate::oracle::{optimal_solve, OracleLimits};
    use crate::trace::{ranking_trace, RecordOptions};

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut st = OptimizerState::default();
        let mut p = vec![1.0, -2.0];
        st.step(&mut p, &[0.0, 0.0], &OptimizerConfig::sgd(0.1, 0.9))
            .unwrap();
        assert_eq!(p, [1.0, -2.0]);
        let mut st = OptimizerState::default();
        st.step(&mut p, &[0.0, 0.0], &OptimizerConfig::adam(0.1))
            .unwrap();
        assert_eq!(p, [1.0, -2.0]);
    }

    #[test]
    fn plain_sgd_step() {
        let mut st = OptimizerState::default();
        let mut p = vec![1.0];
        st.step(&mut p, &[1.0], &OptimizerConfig::sgd(0.1, 0.0))
            .unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut st = OptimizerState::default();
        let mut p = vec![0.0];
        let cfg = OptimizerConfig::sgd(0.1, 0.9);
        st.step(&mut p, &[1.0], &cfg).unwrap();
        st.step(&mut p, &[1.0], &cfg).unwrap();
        // v1 = -0.1, v2 = -0.09 - 0.1
        assert!((p[0] - (-0.1 - 0.19)).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_has_size_learning_rate() {
        for c in [1e-4, 1.0, 1e4] {
            let mut st = OptimizerState::default();
            let mut p = vec![0.0];
            st.step(&mut p, &[c], &OptimizerConfig::adam(0.01)).unwrap();
            assert!((p[0] + 0.01).abs() < 1e-6, "c = {c}: step {}", p[0]);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut st = OptimizerState::default();
        let mut p = vec![0.0; 2];
        assert!(matches!(
            st.step(&mut p, &[1.0], &OptimizerConfig::default()),
            Err(TrainError::ShapeMismatch { .. })
        ));
    }

    fn tree_item(kind: LossKind) -> TrainItem {
        let inst = fixtures::ranking_tree();
        let plan = optimal_solve(&inst, &OracleLimits::default()).unwrap();
        let t = ranking_trace(&inst, &plan).unwrap();
        TrainItem::new(t.training_records(kind, &RecordOptions::default()).unwrap())
    }

    #[test]
    fn tabular_lstar_separates_the_ranking_tree() {
        let items = [tree_item(LossKind::Lstar)];
        let mut cfg = TrainConfig::new(LossKind::Lstar);
        cfg.optimizer = OptimizerConfig::adam(0.1);
        cfg.epochs = 500;
        cfg.l01_target = Some(0);
        let model = HeuristicModel::init(ModelSpec::tabular(), 0).unwrap();
        let (_, report) = train(&items, &[], model, &cfg).unwrap();
        assert_eq!(report.final_l01(), Some(0));
        assert_eq!(report.stop_reason, StopReason::L01Target);
        assert!(report.rows.len() < 500);
    }

    #[test]
    fn training_is_deterministic() {
        let items = [tree_item(LossKind::Lstar), tree_item(LossKind::Lstar)];
        let mut cfg = TrainConfig::new(LossKind::Lstar);
        cfg.epochs = 20;
        let run = || {
            let m = HeuristicModel::init(ModelSpec::tabular(), 0).unwrap();
            let (m, r) = train(&items, &[], m, &cfg).unwrap();
            (m.to_json(), r.to_csv(false))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_training_set_returns_the_model() {
        let m = HeuristicModel::init(ModelSpec::linear(2), 0).unwrap();
        let cfg = TrainConfig::new(LossKind::Lstar);
        let (back, report) = train(&[], &[], m.clone(), &cfg).unwrap();
        assert_eq!(back, m);
        assert_eq!(report.stop_reason, StopReason::EmptyTrainingSet);
        assert!(report.rows.is_empty());
    }

    #[test]
    fn huge_steps_diverge() {
        let items = [tree_item(LossKind::Lrt)];
        let mut cfg = TrainConfig::new(LossKind::Lrt);
        cfg.optimizer = OptimizerConfig::sgd(1e308, 0.9);
        cfg.epochs = 10;
        let m = HeuristicModel::init(ModelSpec::tabular(), 0).unwrap();
        assert!(matches!(
            train(&items, &[], m, &cfg),
            Err(TrainError::Divergence { .. })
        ));
    }

    #[test]
    fn mismatched_records_rejected() {
        let items = [tree_item(LossKind::Lrt)];
        let cfg = TrainConfig::new(LossKind::Lstar);
        let m = HeuristicModel::init(ModelSpec::tabular(), 0).unwrap();
        assert!(matches!(
            train(&items, &[], m, &cfg),
            Err(TrainError::WrongRecords { .. })
        ));
    }

    #[test]
    fn early_stopping_keeps_the_best_epoch() {
        let items = [tree_item(LossKind::Lstar)];
        let mut cfg = TrainConfig::new(LossKind::Lstar);
        cfg.optimizer = OptimizerConfig::adam(0.1);
        cfg.epochs = 200;
        cfg.early_stop = Some(EarlyStop { patience: 3 });
        let m = HeuristicModel::init(ModelSpec::tabular(), 0).unwrap();
        let (m, report) = train(&items, &items, m, &cfg).unwrap();
        assert_eq!(report.stop_reason, StopReason::EarlyStop);
        let best = report
            .rows
            .iter()
            .filter_map(|r| r.validation_l01)
            .min()
            .unwrap();
        assert_eq!(
            l01_of(&m, &items[0].records, 1.0, 1.0, false).unwrap(),
            best
        );
    }
}
