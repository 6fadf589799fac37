use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use toolground::io;
use toolground::scenario::{BudgetOverrides, PolicyFields, ScenarioConfig, ScenarioFields};
use toolground_core::registry::{ToolFilter, ToolKind, BASE_CATEGORIES};
use toolground_core::rl::{
    group_advantages, score_trajectory, update_source_weights, AnswerEvaluator, GroupBatch, RewardConfig,
};
use toolground_core::scheduler::Outcome;
use toolground_core::stats::{aggregate, trace_stats};

#[derive(Parser)]
#[command(name = "toolground", version, about = "Run and inspect tool-grounded video QA episodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its trace.
    Run(Box<RunArgs>),
    #[command(subcommand)]
    Tools(ToolsCmd),
    #[command(subcommand)]
    Trace(TraceCmd),
    #[command(subcommand)]
    Rl(RlCmd),
}

#[derive(Args)]
struct ManifestArg {
    /// Tool manifest (defaults to $TOOLGROUND_MANIFEST, then the built-in library).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; its fields override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    question: Option<String>,
    /// Answer option, repeatable.
    #[arg(long = "option")]
    options: Vec<String>,
    #[arg(long)]
    gold: Option<String>,
    #[arg(long)]
    planner_script: Option<PathBuf>,
    #[arg(long)]
    planner_endpoint: Option<String>,
    #[arg(long)]
    planner_model: Option<String>,
    #[arg(long)]
    planner_repeat_last: bool,
    #[arg(long)]
    resolver_script: Option<PathBuf>,
    #[arg(long)]
    resolver_endpoint: Option<String>,
    #[arg(long)]
    resolver_model: Option<String>,
    #[arg(long)]
    resolver_rules: Option<PathBuf>,
    #[arg(long)]
    resolver_repeat_last: bool,
    #[arg(long)]
    max_root_rounds: Option<u32>,
    #[arg(long)]
    max_resolver_rounds: Option<u32>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    max_wall_clock: Option<f64>,
    #[arg(long)]
    max_tool_cost: Option<u64>,
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace output path.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn fields(&self) -> ScenarioFields {
        let flag = |b: bool| b.then_some(true);
        ScenarioFields {
            comment: None,
            world: self.world.clone(),
            manifest: self.manifest.clone(),
            question: self.question.clone(),
            options: (!self.options.is_empty()).then(|| self.options.clone()),
            gold: self.gold.clone(),
            planner: PolicyFields {
                script: self.planner_script.clone(),
                endpoint: self.planner_endpoint.clone(),
                model: self.planner_model.clone(),
                rules: None,
                repeat_last: flag(self.planner_repeat_last),
            },
            resolver: PolicyFields {
                script: self.resolver_script.clone(),
                endpoint: self.resolver_endpoint.clone(),
                model: self.resolver_model.clone(),
                rules: self.resolver_rules.clone(),
                repeat_last: flag(self.resolver_repeat_last),
            },
            budget: BudgetOverrides {
                max_root_rounds: self.max_root_rounds,
                max_resolver_rounds: self.max_resolver_rounds,
                max_depth: self.max_depth,
                max_wall_clock: self.max_wall_clock,
                max_tool_cost: self.max_tool_cost,
            },
            max_parallel: self.max_parallel,
            seed: self.seed,
            output: self.output.clone(),
        }
    }
}

#[derive(Subcommand)]
enum ToolsCmd {
    /// List registered tools.
    List {
        #[command(flatten)]
        manifest: ManifestArg,
        #[arg(long)]
        kind: Option<KindArg>,
        #[arg(long)]
        category: Option<String>,
        /// Emit one JSON spec per line.
        #[arg(long)]
        json: bool,
    },
    /// Count tools by kind and base category.
    Count {
        #[command(flatten)]
        manifest: ManifestArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Base,
    Meta,
}

#[derive(Subcommand)]
enum TraceCmd {
    /// Behavior statistics over trace files.
    Stats {
        traces: Vec<PathBuf>,
        #[command(flatten)]
        manifest: ManifestArg,
        /// Print CSV tables instead of text.
        #[arg(long)]
        csv: bool,
        /// Print the full report as JSON.
        #[arg(long, conflicts_with = "csv")]
        json: bool,
    },
}

#[derive(Subcommand)]
enum RlCmd {
    /// Reward of each trace, one JSON line per trace.
    Score {
        traces: Vec<PathBuf>,
        /// Gold answer overriding the one recorded in the traces.
        #[arg(long)]
        gold: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        lambda_valid: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda_cost: f64,
        #[arg(long, value_enum, default_value = "exact-match-mcq")]
        evaluator: EvaluatorArg,
    },
    /// Group-relative advantages for `{group, rewards}` records.
    Advantages {
        groups: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
    },
    /// Update data-source sampling weights from average rewards.
    Reweight {
        /// JSON object of source → weight.
        #[arg(long)]
        weights: PathBuf,
        /// JSON object of source → average reward.
        #[arg(long)]
        rewards: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        smoothing: f64,
        #[arg(long, default_value_t = 0.1)]
        floor: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluatorArg {
    ExactMatchMcq,
    TokenF1,
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    file: &'a Path,
    index: usize,
    outcome: &'static str,
    #[serde(flatten)]
    score: toolground_core::rl::TrajectoryScore,
}

#[derive(Deserialize)]
struct GroupInput {
    group: String,
    rewards: Vec<f64>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(&args),
        Command::Tools(cmd) => tools(cmd).map(|_| ExitCode::SUCCESS),
        Command::Trace(TraceCmd::Stats { traces, manifest, csv, json }) => {
            trace_stats_cmd(&traces, manifest.manifest.as_deref(), csv, json).map(|_| ExitCode::SUCCESS)
        }
        Command::Rl(cmd) => rl(cmd).map(|_| ExitCode::SUCCESS),
    }
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let mut fields = args.fields();
    if let Some(path) = &args.config {
        fields = fields.overlay(ScenarioFields::from_file(path)?);
    }
    let cfg = ScenarioConfig::try_from(fields)?;
    let traj = toolground::run_scenario(&cfg)?;
    println!("outcome: {}", traj.outcome.as_str());
    println!("answer: {}", traj.answer().unwrap_or(""));
    println!("rounds: {}", traj.rounds());
    println!("tool calls: {}", traj.tool_calls().count());
    if let Some(out) = &cfg.output {
        println!("trace: {}", out.display());
    }
    Ok(match traj.outcome {
        Outcome::Finished | Outcome::MaxRounds => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    })
}

fn tools(cmd: ToolsCmd) -> Result<()> {
    match cmd {
        ToolsCmd::List { manifest, kind, category, json } => {
            let reg = io::load_registry(manifest.manifest.as_deref())?;
            let kind = kind.map(|k| match k {
                KindArg::Base => ToolKind::Base,
                KindArg::Meta => ToolKind::Meta,
            });
            for spec in reg.iter() {
                if kind.is_some_and(|k| spec.kind != k) || category.as_ref().is_some_and(|c| &spec.category != c) {
                    continue;
                }
                if json {
                    println!("{}", serde_json::to_string(spec)?);
                } else {
                    let kind = if spec.kind == ToolKind::Base { "base" } else { "meta" };
                    println!("{}\t{}\t{}\t{}", spec.name, kind, spec.category, spec.description);
                }
            }
        }
        ToolsCmd::Count { manifest } => {
            let reg = io::load_registry(manifest.manifest.as_deref())?;
            println!("total: {}", reg.len());
            println!("base: {}", reg.count(&ToolFilter::kind(ToolKind::Base)));
            println!("meta: {}", reg.count(&ToolFilter::kind(ToolKind::Meta)));
            for cat in BASE_CATEGORIES {
                let n = reg.iter().filter(|s| s.kind == ToolKind::Base && s.category == cat).count();
                println!("  {cat}: {n}");
            }
        }
    }
    Ok(())
}

fn trace_stats_cmd(paths: &[PathBuf], manifest: Option<&Path>, csv: bool, json: bool) -> Result<()> {
    let reg = io::load_registry(manifest)?;
    let mut rows = Vec::new();
    for p in paths {
        for (i, t) in io::read_traces(p)?.iter().enumerate() {
            rows.push(trace_stats(&format!("{}#{i}", p.display()), t, Some(&reg)));
        }
    }
    let report = aggregate(rows);
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else if csv {
        print!("{}", report.to_csv());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn rl(cmd: RlCmd) -> Result<()> {
    match cmd {
        RlCmd::Score { traces, gold, lambda_valid, lambda_cost, evaluator } => {
            let cfg = RewardConfig {
                lambda_valid,
                lambda_cost,
                answer_evaluator: match evaluator {
                    EvaluatorArg::ExactMatchMcq => AnswerEvaluator::ExactMatchMcq,
                    EvaluatorArg::TokenF1 => AnswerEvaluator::TokenF1,
                },
                ..RewardConfig::default()
            };
            cfg.check()?;
            for p in &traces {
                for (index, t) in io::read_traces(p)?.iter().enumerate() {
                    let score = score_trajectory(t, gold.as_deref(), &cfg)
                        .with_context(|| format!("{}#{index}", p.display()))?;
                    let line = ScoreLine { file: p, index, outcome: t.outcome.as_str(), score };
                    println!("{}", serde_json::to_string(&line)?);
                }
            }
        }
        RlCmd::Advantages { groups, epsilon } => {
            let inputs: Vec<GroupInput> = io::read_records(&groups)?;
            for g in inputs {
                let batch = group_advantages(GroupBatch::new(&g.group, g.rewards), epsilon)
                    .with_context(|| format!("group {}", g.group))?;
                println!("{}", serde_json::to_string(&batch)?);
            }
        }
        RlCmd::Reweight { weights, rewards, smoothing, floor } => {
            let w: BTreeMap<String, f64> = io::read_json(&weights)?;
            let r: BTreeMap<String, f64> = io::read_json(&rewards)?;
            if w.is_empty() {
                bail!("{}: no sources", weights.display());
            }
            let updated = update_source_weights(&w, &r, smoothing, floor)?;
            println!("{}", serde_json::to_string_pretty(&updated)?);
        }
    }
    Ok(())
}
