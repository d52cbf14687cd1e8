use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use heurank::domains::{DomainParams, DomainTag};
use heurank::harness::io;
use heurank::harness::pipeline::{
    self, EvalArgs, GenerateArgs, HeuristicArg, ReportArgs, SolveArgs, TraceArgs, TrainArgs,
};
use heurank::losses::LossKind;
use heurank::models::ModelSpec;
use heurank::optim::{EarlyStop, OptimizerConfig, OptimizerKind, TrainConfig};
use heurank::oracle::OracleLimits;
use heurank::search::{Reopening, SearchConfig, TiePolicy, DEFAULT_EXPANSION_BUDGET};
use heurank::trace::{DeadEndPolicy, LabelScope, PairScope, RecordOptions};
use heurank::verify::{self, CaseName};
use serde::de::DeserializeOwned;

/// Learn heuristics for forward search by ranking, and evaluate them.
#[derive(Parser)]
#[command(name = "heurank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded instances as JSONL.
    Generate {
        #[arg(long)]
        domain: DomainTag,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator parameters as JSON, e.g. '{"size":15,"teleports":4}'.
        #[arg(long, default_value = "{}")]
        params: String,
        /// Shortcut for the `size` parameter.
        #[arg(long)]
        size: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve instances optimally.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write every optimal plan, up to this many per instance.
        #[arg(long)]
        enumerate: Option<usize>,
        #[arg(long, default_value_t = OracleLimits::default().max_states)]
        max_states: usize,
    },
    /// Extract training records from plans.
    Trace {
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        plans: PathBuf,
        #[arg(long)]
        loss: LossKind,
        #[arg(long)]
        out: PathBuf,
        /// all_steps or before_goal.
        #[arg(long, default_value = "all_steps", value_parser = snake::<PairScope>)]
        pair_scope: PairScope,
        /// path or all_trace_states.
        #[arg(long, default_value = "path", value_parser = snake::<LabelScope>)]
        label_scope: LabelScope,
        /// reject or capped.
        #[arg(long, default_value = "reject", value_parser = snake::<DeadEndPolicy>)]
        dead_ends: DeadEndPolicy,
        #[arg(long)]
        plans_per_instance: Option<usize>,
        #[arg(long, default_value_t = OracleLimits::default().max_states)]
        max_states: usize,
    },
    /// Train a model on records and write a checkpoint.
    Train(TrainCmd),
    /// Evaluate a heuristic under a search configuration.
    Eval(EvalCmd),
    /// Run named verification cases and print JSON evidence.
    Verify {
        #[arg(long, required_unless_present = "all")]
        case: Option<CaseName>,
        #[arg(long)]
        all: bool,
    },
    /// Build comparison tables from eval outputs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    records: PathBuf,
    /// JSON model spec with a format_version field.
    #[arg(long)]
    model_spec: PathBuf,
    #[arg(long)]
    loss: LossKind,
    /// Merit weights; default to the loss's own.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Shuffling seed; also the initialization seed unless --model-seed is set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value = "adam")]
    optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long)]
    validation: Option<PathBuf>,
    /// L* records matching --records one-to-one, for reporting the 0-1 loss.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    l01_target: Option<usize>,
    /// Count only strictly positive margins as violations.
    #[arg(long)]
    paper_strict: bool,
    /// Per-epoch CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    instances: PathBuf,
    /// Checkpoint path, or one of oracle, zero, estimate, reference.
    #[arg(long)]
    model: HeuristicArg,
    /// astar, gbfs or custom.
    #[arg(long, default_value = "astar")]
    search: String,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EXPANSION_BUDGET)]
    budget: u64,
    /// Additional wall-clock limit per search. Makes results machine-dependent.
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long, default_value = "lifo")]
    tie_policy: TiePolicy,
    #[arg(long)]
    no_reopening: bool,
    /// Column label in reports.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn snake<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn search_config(cmd: &EvalCmd) -> Result<SearchConfig> {
    let mut cfg = match cmd.search.as_str() {
        "astar" => SearchConfig::astar(),
        "gbfs" => SearchConfig::gbfs(),
        "custom" => {
            let (Some(a), Some(b)) = (cmd.alpha, cmd.beta) else {
                bail!("--search custom needs --alpha and --beta");
            };
            SearchConfig::custom(a, b)
        }
        other => bail!("unknown search `{other}` (expected astar, gbfs or custom)"),
    };
    if cmd.search != "custom" && (cmd.alpha.is_some() || cmd.beta.is_some()) {
        cfg.alpha = cmd.alpha.unwrap_or(cfg.alpha);
        cfg.beta = cmd.beta.unwrap_or(cfg.beta);
    }
    cfg = cfg.with_budget(cmd.budget).with_tie_policy(cmd.tie_policy);
    if cmd.no_reopening {
        cfg = cfg.with_reopening(Reopening::Disabled);
    }
    cfg.seconds_budget = cmd.seconds;
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(cmd: &TrainCmd) -> TrainConfig {
    let mut cfg = TrainConfig::new(cmd.loss);
    cfg.alpha = cmd.alpha.unwrap_or(cfg.alpha);
    cfg.beta = cmd.beta.unwrap_or(cfg.beta);
    cfg.optimizer = match cmd.optimizer {
        OptimizerKind::SgdMomentum => OptimizerConfig::sgd(cmd.lr, cmd.momentum),
        OptimizerKind::AdaptiveMoment => OptimizerConfig::adam(cmd.lr),
    };
    cfg.epochs = cmd.epochs;
    cfg.seed = cmd.seed;
    cfg.early_stop = cmd.patience.map(|patience| EarlyStop { patience });
    cfg.l01_target = cmd.l01_target;
    cfg.paper_strict = cmd.paper_strict;
    cfg
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate {
            domain,
            count,
            seed,
            params,
            size,
            out,
        } => {
            let mut params: DomainParams =
                serde_json::from_str(&params).context("parsing --params")?;
            if size.is_some() {
                params.size = size;
            }
            let instances = pipeline::generate(&GenerateArgs {
                domain,
                count,
                seed,
                params,
                out: out.clone(),
            })?;
            eprintln!("wrote {} instances to {}", instances.len(), out.display());
        }
        Command::Solve {
            input,
            out,
            enumerate,
            max_states,
        } => {
            let lines = pipeline::solve(&SolveArgs {
                input,
                out: out.clone(),
                enumerate,
                limits: OracleLimits { max_states },
            })?;
            eprintln!("wrote {} plans to {}", lines.len(), out.display());
        }
        Command::Trace {
            instances,
            plans,
            loss,
            out,
            pair_scope,
            label_scope,
            dead_ends,
            plans_per_instance,
            max_states,
        } => {
            let sets = pipeline::trace(&TraceArgs {
                instances,
                plans,
                loss,
                options: RecordOptions {
                    pair_scope,
                    label_scope,
                    dead_ends,
                },
                plans_per_instance,
                out: out.clone(),
                limits: OracleLimits { max_states },
            })?;
            let records: usize = sets.iter().map(|s| s.records.len()).sum();
            eprintln!(
                "wrote {} record sets ({records} records) to {}",
                sets.len(),
                out.display()
            );
        }
        Command::Train(cmd) => {
            let model_spec: ModelSpec = io::read_json(&cmd.model_spec, "a model spec file")?;
            let config = train_config(&cmd);
            let (_, report) = pipeline::train(&TrainArgs {
                records: cmd.records.clone(),
                validation: cmd.validation.clone(),
                pairs: cmd.pairs.clone(),
                model_spec,
                model_seed: cmd.model_seed.unwrap_or(cmd.seed),
                config,
                out: cmd.out.clone(),
                report: cmd.report.clone(),
            })?;
            let last = report.rows.last();
            println!(
                "{}",
                serde_json::json!({
                    "epochs": report.rows.len(),
                    "stop_reason": report.stop_reason,
                    "surrogate": last.map(|r| r.surrogate),
                    "l01": last.and_then(|r| r.l01),
                    "checkpoint": cmd.out,
                })
            );
        }
        Command::Eval(cmd) => {
            let search = search_config(&cmd)?;
            let (_, metrics) = pipeline::eval(&EvalArgs {
                instances: cmd.instances.clone(),
                heuristic: cmd.model.clone(),
                search,
                search_name: cmd.search.clone(),
                model_name: cmd.name.clone(),
                out: cmd.out.clone(),
            })?;
            for m in &metrics {
                println!("{}", serde_json::to_string(m)?);
            }
        }
        Command::Verify { case, all } => {
            let names: Vec<CaseName> = if all {
                CaseName::ALL.to_vec()
            } else {
                case.into_iter().collect()
            };
            let results = verify::run_cases(&names);
            println!("{}", serde_json::to_string_pretty(&results)?);
            if results.iter().any(|c| c.failed()) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { metrics, out } => {
            let tables = pipeline::report(&ReportArgs { metrics, out })?;
            for t in &tables {
                println!("{}", t.to_text());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
