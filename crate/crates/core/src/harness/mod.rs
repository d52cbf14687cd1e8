//! Dataset preparation, evaluation and reporting.
//!
//! Evaluation fans out over instances on a rayon pool capped by the
//! `HEURANK_WORKERS` environment variable. Results come back in input order,
//! so aggregates do not depend on the number of workers.

pub mod io;
pub mod pipeline;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{DomainError, ProblemInstance};
use crate::losses::LossKind;
use crate::models::{HeuristicModel, ModelError, ModelSpec};
use crate::optim::{train, TrainConfig, TrainError, TrainItem, TrainReport};
use crate::oracle::{self, OracleError, OracleLimits};
use crate::search::{
    forward_search, DomainEstimate, Heuristic, ReferenceHeuristic, SearchConfig, SearchError,
    SearchStatus, ZeroHeuristic,
};
use crate::trace::{label_trace, ranking_trace, RankingTrace, RecordOptions, TraceError};

pub use io::{FormatError, HarnessIoError};

/// Environment variable capping evaluation parallelism.
pub const WORKERS_ENV: &str = "HEURANK_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] HarnessIoError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] crate::losses::LossError),
    #[error("{0}")]
    Invalid(String),
}

/// Number of evaluation workers: `HEURANK_WORKERS` if set and positive,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available)
}

fn run_pooled<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Where heuristic values come from during evaluation.
#[derive(Clone, Debug)]
pub enum HeuristicSource {
    Model(Box<HeuristicModel>),
    /// Exact cost-to-goal computed per instance.
    Oracle,
    Zero,
    /// The domain's admissible estimate.
    Estimate,
    /// Per-node values bundled with explicit graphs.
    Reference,
}

impl HeuristicSource {
    pub fn name(&self) -> &'static str {
        match self {
            HeuristicSource::Model(_) => "model",
            HeuristicSource::Oracle => "oracle",
            HeuristicSource::Zero => "zero",
            HeuristicSource::Estimate => "estimate",
            HeuristicSource::Reference => "reference",
        }
    }
}

/// Outcome of one search on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub search: String,
    pub model: String,
    pub instance_id: String,
    pub status: SearchStatus,
    pub expanded: u64,
    pub generated: u64,
    pub plan_length: Option<usize>,
    pub cost: Option<f64>,
}

impl EvalRow {
    pub fn solved(&self) -> bool {
        self.status == SearchStatus::Solved
    }
}

/// Runs `cfg` with `source` on every instance.
pub fn evaluate(
    instances: &[ProblemInstance],
    source: &HeuristicSource,
    cfg: &SearchConfig,
    search_name: &str,
    model_name: &str,
) -> Result<Vec<EvalRow>, HarnessError> {
    let one = |inst: &ProblemInstance| -> Result<EvalRow, HarnessError> {
        let table;
        let h: &dyn Heuristic = match source {
            HeuristicSource::Model(m) => m.as_ref(),
            HeuristicSource::Zero => &ZeroHeuristic,
            HeuristicSource::Estimate => &DomainEstimate,
            HeuristicSource::Reference => &ReferenceHeuristic,
            HeuristicSource::Oracle => {
                table = oracle::cost_to_goal(inst, None, &OracleLimits::default())?;
                &table
            }
        };
        let r = forward_search(inst, h, cfg)?;
        Ok(EvalRow {
            search: search_name.to_string(),
            model: model_name.to_string(),
            instance_id: inst.instance_id.clone(),
            status: r.status,
            expanded: r.expanded_count,
            generated: r.generated_count,
            plan_length: r.plan.as_ref().map(|p| p.length()),
            cost: r.cost(),
        })
    };
    run_pooled(|| instances.par_iter().map(one).collect())
}

/// Summary of one `(search, model)` column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub search: String,
    pub model: String,
    pub instances: usize,
    pub solved: usize,
    /// Percent of instances solved.
    pub solved_fraction: f64,
    /// Mean expansions over the common-solved set.
    pub avg_expanded: Option<f64>,
    /// Mean expansions over every instance, unsolved ones counted at the budget.
    pub avg_expanded_all: Option<f64>,
    /// Mean plan length over the common-solved set.
    pub avg_plan_length: Option<f64>,
    /// Mean plan cost over the common-solved set.
    pub avg_cost: Option<f64>,
    /// Size of the set of instances solved by every compared column.
    pub common_solved: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Groups rows by `(search, model)`, in order of first appearance, and
/// summarizes each group. Plan length, cost and expansions are averaged over
/// the instances solved by every group.
pub fn aggregate(rows: &[EvalRow]) -> Vec<EvalMetrics> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: HashMap<(String, String), Vec<&EvalRow>> = HashMap::new();
    for r in rows {
        let key = (r.search.clone(), r.model.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut common: Option<HashSet<&str>> = None;
    for key in &order {
        let solved: HashSet<&str> = groups[key]
            .iter()
            .filter(|r| r.solved())
            .map(|r| r.instance_id.as_str())
            .collect();
        common = Some(match common {
            None => solved,
            Some(c) => c.intersection(&solved).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let solved = g.iter().filter(|r| r.solved()).count();
            let in_common: Vec<&&EvalRow> = g
                .iter()
                .filter(|r| common.contains(r.instance_id.as_str()))
                .collect();
            EvalMetrics {
                search: key.0,
                model: key.1,
                instances: g.len(),
                solved,
                solved_fraction: if g.is_empty() {
                    0.0
                } else {
                    100.0 * solved as f64 / g.len() as f64
                },
                avg_expanded: mean(in_common.iter().map(|r| r.expanded as f64)),
                avg_expanded_all: mean(g.iter().map(|r| r.expanded as f64)),
                avg_plan_length: mean(
                    in_common
                        .iter()
                        .filter_map(|r| r.plan_length.map(|l| l as f64)),
                ),
                avg_cost: mean(in_common.iter().filter_map(|r| r.cost)),
                common_solved: common.len(),
            }
        })
        .collect()
}

/// Index sets of a seeded 50/25/25 split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n / 2;
    let n_val = n / 4;
    Split {
        train: idx[..n_train].to_vec(),
        validation: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    }
}

/// An instance with its oracle plan and the trace of that plan.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub instance: ProblemInstance,
    pub trace: RankingTrace,
}

/// Solves every instance optimally and builds traces, with cost-to-goal
/// labels when `label` is set.
pub fn prepare(
    instances: &[ProblemInstance],
    label: bool,
    limits: &OracleLimits,
) -> Result<Vec<Prepared>, HarnessError> {
    let one = |inst: &ProblemInstance| -> Result<Prepared, HarnessError> {
        let plan = oracle::optimal_solve_informed(inst, limits)?;
        let mut trace = ranking_trace(inst, &plan)?;
        if label {
            label_trace(inst, &mut trace, limits)?;
        }
        Ok(Prepared {
            instance: inst.clone(),
            trace,
        })
    };
    run_pooled(|| instances.par_iter().map(one).collect())
}

/// Training items for `loss`. Non-ranking losses also get the A* ranking
/// pairs so that the 0-1 loss can be reported.
pub fn train_items(
    prepared: &[Prepared],
    loss: LossKind,
    opts: &RecordOptions,
) -> Result<Vec<TrainItem>, HarnessError> {
    prepared
        .iter()
        .map(|p| {
            let records = p.trace.training_records(loss, opts)?;
            Ok(match loss {
                LossKind::Lstar | LossKind::Lgbfs => TrainItem::new(records),
                _ => {
                    TrainItem::with_pairs(records, p.trace.training_records(LossKind::Lstar, opts)?)
                }
            })
        })
        .collect()
}

/// Shared settings of a loss comparison. Only the loss differs between runs.
#[derive(Clone, Debug)]
pub struct CompareConfig {
    pub losses: Vec<LossKind>,
    /// Named searches; budgets are overwritten by `budget`.
    pub searches: Vec<(String, SearchConfig)>,
    pub model_spec: ModelSpec,
    pub model_seed: u64,
    /// Template; loss kind, alpha and beta are set per loss.
    pub train: TrainConfig,
    pub record_options: RecordOptions,
    pub budget: u64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<EvalRow>,
    pub metrics: Vec<EvalMetrics>,
    pub reports: Vec<(LossKind, TrainReport)>,
    pub models: Vec<(LossKind, HeuristicModel)>,
}

/// Trains one model per loss from the same initialization and evaluates each
/// under every search.
pub fn compare_losses(
    train_set: &[Prepared],
    validation: &[Prepared],
    test: &[ProblemInstance],
    cfg: &CompareConfig,
) -> Result<Comparison, HarnessError> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut models = Vec::new();
    for &loss in &cfg.losses {
        let items = train_items(train_set, loss, &cfg.record_options)?;
        let val = train_items(validation, loss, &cfg.record_options)?;
        let mut tc = cfg.train.clone();
        tc.loss_kind = loss;
        (tc.alpha, tc.beta) = loss.merit();
        let init = HeuristicModel::init(cfg.model_spec.clone(), cfg.model_seed)?;
        let (model, report) = train(&items, &val, init, &tc)?;
        let source = HeuristicSource::Model(Box::new(model.clone()));
        for (name, search) in &cfg.searches {
            let sc = search.with_budget(cfg.budget);
            rows.extend(evaluate(test, &source, &sc, name, loss.as_str())?);
        }
        reports.push((loss, report));
        models.push((loss, model));
    }
    let metrics = aggregate(&rows);
    Ok(Comparison {
        rows,
        metrics,
        reports,
        models,
    })
}

/// A rectangular table rendered as CSV or aligned text.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (k, c) in r.iter().enumerate() {
                width[k] = width[k].max(c.len());
            }
        }
        let line = |r: &[String]| {
            r.iter()
                .enumerate()
                .map(|(k, c)| format!("{:>w$}", c, w = width[k]))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = format!("{}\n{}\n", self.title, line(&self.header));
        out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

/// `(domain, complexity)` from an instance id of the form
/// `<domain>-<size>-s<seed>`; other ids form their own group.
fn group_of(instance_id: &str) -> (String, String) {
    let mut parts = instance_id.splitn(3, '-');
    match (parts.next(), parts.next()) {
        (Some(d), Some(c)) if c.chars().all(|ch| ch.is_ascii_digit()) => {
            (d.to_string(), c.to_string())
        }
        _ => (instance_id.to_string(), String::new()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

/// Solved-percent, average-expansions and average-length tables: one row per
/// domain and size, one column per `(search, model)`.
pub fn report_tables(rows: &[EvalRow]) -> [Table; 3] {
    let mut columns: Vec<(String, String)> = Vec::new();
    let mut by_group: BTreeMap<(String, String), Vec<EvalRow>> = BTreeMap::new();
    for r in rows {
        let col = (r.search.clone(), r.model.clone());
        if !columns.contains(&col) {
            columns.push(col);
        }
        by_group
            .entry(group_of(&r.instance_id))
            .or_default()
            .push(r.clone());
    }
    let mut header = vec!["problem".to_string(), "complexity".to_string()];
    header.extend(columns.iter().map(|(s, m)| format!("{s}:{m}")));
    let mut tables = [
        ("Solved instances (percent)", Vec::new()),
        ("Average expanded states (common-solved set)", Vec::new()),
        ("Average plan length (common-solved set)", Vec::new()),
    ];
    for ((domain, complexity), group_rows) in &by_group {
        let metrics = aggregate(group_rows);
        let find = |col: &(String, String)| {
            metrics
                .iter()
                .find(|m| m.search == col.0 && m.model == col.1)
        };
        for (k, (_, out)) in tables.iter_mut().enumerate() {
            let mut row = vec![domain.clone(), complexity.clone()];
            for col in &columns {
                row.push(match (k, find(col)) {
                    (_, None) => "-".into(),
                    (0, Some(m)) => format!("{:.1}", m.solved_fraction),
                    (1, Some(m)) => fmt_opt(m.avg_expanded),
                    (_, Some(m)) => fmt_opt(m.avg_plan_length),
                });
            }
            out.push(row);
        }
    }
    tables.map(|(title, rows)| Table {
        title: title.to_string(),
        header: header.clone(),
        rows,
    })
}
