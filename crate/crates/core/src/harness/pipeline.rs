//! The file-to-file stages behind the command-line tool.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::io::{self, PlanLine};
use super::{
    aggregate, evaluate, report_tables, run_pooled, EvalMetrics, EvalRow, HarnessError,
    HeuristicSource, Table,
};
use crate::domains::{generate_instance, DomainParams, DomainTag, ProblemInstance};
use crate::losses::LossKind;
use crate::models::{HeuristicModel, ModelKind, ModelSpec};
use crate::optim::{train as run_training, TrainConfig, TrainItem, TrainReport};
use crate::oracle::{self, OracleLimits};
use crate::search::SearchConfig;
use crate::trace::{label_trace, ranking_trace, RecordOptions, RecordSet};

#[derive(Clone, Debug)]
pub struct GenerateArgs {
    pub domain: DomainTag,
    pub count: usize,
    pub seed: u64,
    pub params: DomainParams,
    pub out: PathBuf,
}

/// Writes `count` instances generated from seeds `seed..seed + count`.
pub fn generate(args: &GenerateArgs) -> Result<Vec<ProblemInstance>, HarnessError> {
    let instances: Vec<ProblemInstance> = run_pooled(|| {
        (0..args.count as u64)
            .into_par_iter()
            .map(|k| generate_instance(args.domain, &args.params, args.seed + k))
            .collect::<Result<_, _>>()
    })?;
    io::write_instances(&args.out, &instances)?;
    Ok(instances)
}

#[derive(Clone, Debug)]
pub struct SolveArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Write up to this many optimal plans per instance instead of one.
    pub enumerate: Option<usize>,
    pub limits: OracleLimits,
}

pub fn solve(args: &SolveArgs) -> Result<Vec<PlanLine>, HarnessError> {
    let instances = io::read_instances(&args.input)?;
    let per_instance: Vec<Vec<PlanLine>> = run_pooled(|| {
        instances
            .par_iter()
            .map(|inst| -> Result<Vec<PlanLine>, HarnessError> {
                let plans = match args.enumerate {
                    None => vec![oracle::optimal_solve_informed(inst, &args.limits)?],
                    Some(limit) => {
                        oracle::enumerate_optimal_plans(inst, limit, &args.limits)?.plans
                    }
                };
                Ok(plans
                    .iter()
                    .enumerate()
                    .map(|(k, p)| PlanLine::new(inst, k, p))
                    .collect())
            })
            .collect::<Result<_, _>>()
    })?;
    let lines: Vec<PlanLine> = per_instance.into_iter().flatten().collect();
    io::write_jsonl(&args.out, &lines)?;
    Ok(lines)
}

#[derive(Clone, Debug)]
pub struct TraceArgs {
    pub instances: PathBuf,
    pub plans: PathBuf,
    pub loss: LossKind,
    pub options: RecordOptions,
    /// Use at most this many plans of each instance, in file order.
    pub plans_per_instance: Option<usize>,
    pub out: PathBuf,
    pub limits: OracleLimits,
}

/// Builds one record set per selected plan. Labels are computed only for
/// losses that need them.
pub fn trace(args: &TraceArgs) -> Result<Vec<RecordSet>, HarnessError> {
    let instances = io::read_instances(&args.instances)?;
    let plans: Vec<PlanLine> = io::read_jsonl(&args.plans, "solve")?;
    let by_id: HashMap<&str, &ProblemInstance> = instances
        .iter()
        .map(|i| (i.instance_id.as_str(), i))
        .collect();
    let mut used: HashMap<&str, usize> = HashMap::new();
    let mut selected = Vec::new();
    for line in &plans {
        let inst = by_id.get(line.instance_id.as_str()).ok_or_else(|| {
            HarnessError::Invalid(format!(
                "plan for unknown instance `{}` in {}",
                line.instance_id,
                args.plans.display()
            ))
        })?;
        let n = used.entry(line.instance_id.as_str()).or_default();
        if args.plans_per_instance.is_some_and(|cap| *n >= cap) {
            continue;
        }
        *n += 1;
        selected.push((*inst, line));
    }
    let sets: Vec<RecordSet> = run_pooled(|| {
        selected
            .par_iter()
            .map(|(inst, line)| -> Result<RecordSet, HarnessError> {
                let plan = line.to_plan(inst).ok_or_else(|| {
                    HarnessError::Invalid(format!(
                        "plan {} of `{}` is not a path of the instance",
                        line.plan_index, line.instance_id
                    ))
                })?;
                let mut t = ranking_trace(inst, &plan)?;
                if args.loss.needs_labels() {
                    label_trace(inst, &mut t, &args.limits)?;
                }
                Ok(t.training_records(args.loss, &args.options)?)
            })
            .collect::<Result<_, _>>()
    })?;
    io::write_jsonl(&args.out, &sets)?;
    Ok(sets)
}

#[derive(Clone, Debug)]
pub struct TrainArgs {
    pub records: PathBuf,
    pub validation: Option<PathBuf>,
    /// Ranking pairs, one record set per training set in the same order, used
    /// to report the 0-1 loss of label-based losses.
    pub pairs: Option<PathBuf>,
    pub model_spec: ModelSpec,
    pub model_seed: u64,
    pub config: TrainConfig,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
}

fn with_pairs(
    sets: Vec<RecordSet>,
    pairs: Option<Vec<RecordSet>>,
) -> Result<Vec<TrainItem>, HarnessError> {
    match pairs {
        None => Ok(sets.into_iter().map(TrainItem::new).collect()),
        Some(p) if p.len() == sets.len() => Ok(sets
            .into_iter()
            .zip(p)
            .map(|(r, p)| TrainItem::with_pairs(r, p))
            .collect()),
        Some(p) => Err(HarnessError::Invalid(format!(
            "{} pair sets for {} record sets",
            p.len(),
            sets.len()
        ))),
    }
}

/// Trains a fresh model and writes its checkpoint. A feature dimension of 0
/// in the spec is inferred from the records.
pub fn train(args: &TrainArgs) -> Result<(HeuristicModel, TrainReport), HarnessError> {
    let sets: Vec<RecordSet> = io::read_jsonl(&args.records, "trace")?;
    let pairs = args
        .pairs
        .as_deref()
        .map(|p| io::read_jsonl(p, "trace --loss lstar"))
        .transpose()?;
    let validation = match &args.validation {
        Some(p) => io::read_jsonl(p, "trace")?,
        None => Vec::new(),
    };
    let mut spec = args.model_spec.clone();
    if spec.kind != ModelKind::Tabular && spec.feature_dim == 0 {
        spec.feature_dim = sets
            .iter()
            .flat_map(|s| s.states.first())
            .map(|e| e.features.len())
            .next()
            .unwrap_or(0);
    }
    let model = HeuristicModel::init(spec, args.model_seed)?;
    let items = with_pairs(sets, pairs)?;
    let val = with_pairs(validation, None)?;
    let (model, mut report) = run_training(&items, &val, model, &args.config)?;
    io::write_raw(&args.out, &model.to_json())?;
    report.checkpoint_path = Some(args.out.display().to_string());
    if let Some(p) = &args.report {
        io::write_text(p, &report.to_csv(true))?;
    }
    Ok((model, report))
}

/// Where `eval` gets heuristic values.
#[derive(Clone, Debug)]
pub enum HeuristicArg {
    Checkpoint(PathBuf),
    Oracle,
    Zero,
    Estimate,
    Reference,
}

impl std::str::FromStr for HeuristicArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "oracle" => HeuristicArg::Oracle,
            "zero" => HeuristicArg::Zero,
            "estimate" => HeuristicArg::Estimate,
            "reference" => HeuristicArg::Reference,
            path => HeuristicArg::Checkpoint(PathBuf::from(path)),
        })
    }
}

pub fn load_checkpoint(path: &Path) -> Result<HeuristicModel, HarnessError> {
    io::require(path, "train")?;
    let text = std::fs::read_to_string(path).map_err(|source| io::HarnessIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(HeuristicModel::from_json(&text)?)
}

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub instances: PathBuf,
    pub heuristic: HeuristicArg,
    pub search: SearchConfig,
    pub search_name: String,
    /// Column label; defaults to the checkpoint's file stem or the source name.
    pub model_name: Option<String>,
    pub out: PathBuf,
}

/// Writes one CSV row per instance and returns the rows with their summary.
pub fn eval(args: &EvalArgs) -> Result<(Vec<EvalRow>, Vec<EvalMetrics>), HarnessError> {
    let instances = io::read_instances(&args.instances)?;
    let (source, default_name) = match &args.heuristic {
        HeuristicArg::Checkpoint(p) => (
            HeuristicSource::Model(Box::new(load_checkpoint(p)?)),
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into()),
        ),
        HeuristicArg::Oracle => (HeuristicSource::Oracle, "oracle".into()),
        HeuristicArg::Zero => (HeuristicSource::Zero, "zero".into()),
        HeuristicArg::Estimate => (HeuristicSource::Estimate, "estimate".into()),
        HeuristicArg::Reference => (HeuristicSource::Reference, "reference".into()),
    };
    let name = args.model_name.clone().unwrap_or(default_name);
    let rows = evaluate(&instances, &source, &args.search, &args.search_name, &name)?;
    io::write_csv(&args.out, &rows)?;
    let metrics = aggregate(&rows);
    Ok((rows, metrics))
}

#[derive(Clone, Debug)]
pub struct ReportArgs {
    pub metrics: Vec<PathBuf>,
    pub out: PathBuf,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

/// Joins per-instance rows from `eval` runs into the solved-percent table at
/// `out`, with expansion and plan-length companions written next to it as
/// `<stem>_expanded` and `<stem>_length`, and an aggregate summary as
/// `<stem>_summary`.
pub fn report(args: &ReportArgs) -> Result<[Table; 3], HarnessError> {
    let mut rows: Vec<EvalRow> = Vec::new();
    for p in &args.metrics {
        rows.extend(io::read_csv::<EvalRow>(p, "eval")?);
    }
    let tables = report_tables(&rows);
    io::write_text(&args.out, &tables[0].to_csv())?;
    io::write_text(&sibling(&args.out, "expanded"), &tables[1].to_csv())?;
    io::write_text(&sibling(&args.out, "length"), &tables[2].to_csv())?;
    io::write_csv(&sibling(&args.out, "summary"), &aggregate(&rows))?;
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerConfig;
    use crate::search::TiePolicy;

    #[test]
    fn stages_chain_on_small_mazes() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        let instances = generate(&GenerateArgs {
            domain: DomainTag::MazeTeleport,
            count: 4,
            seed: 1,
            params: DomainParams::maze(6, 2),
            out: p("inst.jsonl"),
        })
        .unwrap();
        assert_eq!(instances.len(), 4);
        let plans = solve(&SolveArgs {
            input: p("inst.jsonl"),
            out: p("plans.jsonl"),
            enumerate: None,
            limits: OracleLimits::default(),
        })
        .unwrap();
        assert_eq!(plans.len(), 4);
        trace(&TraceArgs {
            instances: p("inst.jsonl"),
            plans: p("plans.jsonl"),
            loss: LossKind::Lstar,
            options: RecordOptions::default(),
            plans_per_instance: None,
            out: p("rec.jsonl"),
            limits: OracleLimits::default(),
        })
        .unwrap();
        let mut cfg = TrainConfig::new(LossKind::Lstar);
        cfg.optimizer = OptimizerConfig::adam(0.1);
        cfg.epochs = 300;
        cfg.l01_target = Some(0);
        let (_, train_report) = train(&TrainArgs {
            records: p("rec.jsonl"),
            validation: None,
            pairs: None,
            model_spec: ModelSpec::tabular(),
            model_seed: 0,
            config: cfg,
            out: p("model.json"),
            report: Some(p("train.csv")),
        })
        .unwrap();
        assert_eq!(train_report.final_l01(), Some(0));
        let (rows, metrics) = eval(&EvalArgs {
            instances: p("inst.jsonl"),
            heuristic: HeuristicArg::Checkpoint(p("model.json")),
            search: SearchConfig::astar().with_tie_policy(TiePolicy::Lifo),
            search_name: "astar".into(),
            model_name: None,
            out: p("rows.csv"),
        })
        .unwrap();
        assert_eq!(metrics[0].model, "model");
        assert_eq!(metrics[0].solved_fraction, 100.0);
        for (r, pl) in rows.iter().zip(&plans) {
            assert_eq!(r.expanded as usize, pl.length);
        }
        let tables = report(&ReportArgs {
            metrics: vec![p("rows.csv")],
            out: p("table.csv"),
        })
        .unwrap();
        assert_eq!(tables[0].rows, [["maze_teleport", "6", "100.0"]]);
        assert!(p("table_expanded.csv").exists() && p("table_summary.csv").exists());
    }

    #[test]
    fn missing_upstream_artifacts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = solve(&SolveArgs {
            input: dir.path().join("none.jsonl"),
            out: dir.path().join("plans.jsonl"),
            enumerate: None,
            limits: OracleLimits::default(),
        })
        .unwrap_err();
        assert!(matches!(
            err,
            HarnessError::Io(io::HarnessIoError::MissingArtifact {
                producer: "generate",
                ..
            })
        ));
    }
}
