use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flnet::experiment::{
    dql_config, metrics_csv, non_decreasing_within, oracle_policy, read_summary, ql_config, rewards_by_cell,
    SweepAxis,
};
use flnet::training::write_training_csv;
use flnet::{
    build_exact_mdp, evaluate_policy, reward_ordering_report, run_experiment, run_training, train_q_learning,
    state_space_size, value_iteration, AgentKind, DdqnAgent, DqnPolicy, EnvConfig, ExperimentSpec, GreedyPolicy, Policy, RandomPolicy,
    TablePolicy,
};

#[derive(Parser)]
#[command(name = "flnet", version, about = "Channel selection and energy recharge for mobile FL workers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec: train and evaluate every agent in every cell.
    Run(RunArgs),
    /// Like `run`, with the sweep axis given on the command line.
    Sweep(SweepArgs),
    /// Train a learning agent, save it, and evaluate its greedy policy.
    Train(TrainArgs),
    /// Evaluate a baseline, the exact solution, or a saved agent.
    Evaluate(EvaluateArgs),
    /// Solve a small instance exactly with value iteration.
    Oracle(OracleArgs),
    /// Check reward ordering (and trends across a sweep) in a summary CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment spec (TOML). Defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory, overriding the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training episodes, overriding the spec.
    #[arg(long)]
    episodes: Option<usize>,
    /// Master seed, overriding the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Agents to run, overriding the spec (comma separated).
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<AgentKind>>,
    /// Relative margin for the ordering report.
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Swept parameter: q_mo, p_en, p_su or num_workers.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    agent: AgentKind,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    agent: AgentKind,
    /// Saved agent written by `train` (required for dql and ql).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct OracleArgs {
    /// Environment TOML; the default parameters with `--workers` otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0.9)]
    discount: f64,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Where to write `state,action,q` rows.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// summary.csv, or the directory holding it.
    path: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    /// Allowed drop between consecutive sweep points, as a fraction of the
    /// range of the swept curve.
    #[arg(long, default_value_t = 0.05)]
    trend_tolerance: f64,
}

fn load_spec(args: &SpecArgs) -> Result<ExperimentSpec> {
    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentSpec::default(),
    };
    if let Some(out) = &args.out {
        spec.output_dir = out.clone();
    }
    if let Some(n) = args.episodes {
        spec.trainer.episodes = n;
    }
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(agents) = &args.agents {
        spec.agents = agents.clone();
    }
    Ok(spec)
}

fn execute(spec: &ExperimentSpec, margin: f64) -> Result<bool> {
    let started = Instant::now();
    let outcome = run_experiment(spec)?;
    let rows = outcome.summaries();
    for r in &rows {
        let value = r.value.map(|v| format!(" {}={v}", r.parameter)).unwrap_or_default();
        println!(
            "cell {}{value} {:<7} final smoothed reward {:.3}",
            r.cell, r.agent, r.final_smoothed_reward
        );
    }
    println!(
        "wrote {} in {:.1}s",
        spec.output_dir.join("summary.csv").display(),
        started.elapsed().as_secs_f64()
    );
    let needed = [AgentKind::Dql, AgentKind::Ql, AgentKind::Greedy, AgentKind::Random];
    if needed.iter().all(|k| spec.agents.contains(k)) {
        return report_rows(&rows, margin, 0.05);
    }
    Ok(true)
}

fn report_rows(rows: &[flnet::SummaryRow], margin: f64, trend_tolerance: f64) -> Result<bool> {
    let mut ok = true;
    for (cell, rewards) in rewards_by_cell(rows) {
        println!("cell {cell}:");
        let report = reward_ordering_report(&rewards, margin)?;
        print!("{}", report.render());
        ok &= report.passed();
    }
    let swept = rows.iter().any(|r| r.value.is_some());
    if swept {
        let mut curve: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.agent == AgentKind::Dql)
            .filter_map(|r| r.value.map(|v| (v, r.final_smoothed_reward)))
            .collect();
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        if curve.len() > 1 {
            let values: Vec<f64> = curve.iter().map(|c| c.1).collect();
            let (trend_ok, bad) = non_decreasing_within(&values, trend_tolerance);
            let tag = if trend_ok { "PASS" } else { "FAIL" };
            println!("{tag}  dql reward non-decreasing along the sweep (drops at points {bad:?})");
            ok &= trend_ok;
        }
    }
    Ok(ok)
}

fn checkpoint_name(agent: AgentKind) -> &'static str {
    match agent {
        AgentKind::Dql => "dql.ckpt",
        _ => "ql_greedy_actions.csv",
    }
}

fn write_actions(path: &Path, actions: &[usize]) -> Result<()> {
    let mut text = String::from("state,action\n");
    for (s, a) in actions.iter().enumerate() {
        text.push_str(&format!("{s},{a}\n"));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_actions(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut actions = Vec::new();
    for (i, line) in text.lines().skip(1).enumerate() {
        let (s, a) = line
            .split_once(',')
            .with_context(|| format!("{}: malformed line {}", path.display(), i + 2))?;
        if s.trim().parse::<usize>()? != i {
            bail!("{}: states must be listed in order", path.display());
        }
        actions.push(a.trim().parse()?);
    }
    Ok(actions)
}

fn evaluate_and_write(agent: AgentKind, policy: &mut dyn Policy, spec: &ExperimentSpec) -> Result<()> {
    let out = &spec.output_dir;
    let eval = evaluate_policy(policy, &spec.env, spec.eval_episodes, spec.eval_steps(), spec.eval_seed())?;
    let n = spec.env.num_channels;
    fs::write(out.join(format!("{agent}_eval.csv")), metrics_csv(&eval.records, n))?;
    fs::write(out.join(format!("{agent}_policy.csv")), eval.histogram.to_csv())?;
    let mean = eval.records.iter().map(|r| r.reward).sum::<f64>() / eval.records.len() as f64;
    println!(
        "{agent}: mean evaluation reward {mean:.3} per {}-step episode over {} episodes",
        spec.eval_steps(),
        spec.eval_episodes
    );
    Ok(())
}

fn prepare(args: &SpecArgs) -> Result<ExperimentSpec> {
    let spec = load_spec(args)?;
    spec.validate()?;
    let out = &spec.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(spec)
}

fn train(args: &TrainArgs) -> Result<()> {
    let spec = prepare(&args.spec)?;
    let (env, out, seed) = (&spec.env, &spec.output_dir, spec.master_seed);
    let started = Instant::now();
    let ckpt = out.join(checkpoint_name(args.agent));
    let mut policy: Box<dyn Policy> = match args.agent {
        AgentKind::Dql => {
            let (agent, records) = run_training(env, &dql_config(&spec, seed))?;
            agent.save_checkpoint(&ckpt)?;
            write_training_csv(&out.join("dql_train.csv"), &records, env.num_channels)?;
            Box::new(DqnPolicy::new(agent))
        }
        AgentKind::Ql => {
            let (table, records) = train_q_learning(env, &ql_config(&spec, seed))?;
            let actions = table.greedy_policy();
            write_actions(&ckpt, &actions)?;
            write_training_csv(&out.join("ql_train.csv"), &records, env.num_channels)?;
            Box::new(TablePolicy::new(env, actions))
        }
        other => bail!("{other} does not learn; use `flnet evaluate --agent {other}`"),
    };
    println!(
        "trained {} for {} episodes in {:.1}s; saved {}",
        args.agent,
        spec.trainer.episodes,
        started.elapsed().as_secs_f64(),
        ckpt.display()
    );
    evaluate_and_write(args.agent, policy.as_mut(), &spec)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let spec = prepare(&args.spec)?;
    let env = &spec.env;
    let checkpoint = || {
        args.checkpoint
            .as_deref()
            .with_context(|| format!("--checkpoint is required for {}", args.agent))
    };
    let mut policy: Box<dyn Policy> = match args.agent {
        AgentKind::Dql => Box::new(DqnPolicy::new(DdqnAgent::load_checkpoint(
            checkpoint()?,
            env,
            &spec.trainer,
        )?)),
        AgentKind::Ql => {
            let actions = read_actions(checkpoint()?)?;
            if actions.len() as u64 != state_space_size(env) {
                bail!("checkpoint lists {} states, the environment has {}", actions.len(), state_space_size(env));
            }
            Box::new(TablePolicy::new(env, actions))
        }
        AgentKind::Greedy => Box::new(GreedyPolicy::new(env)),
        AgentKind::Random => Box::new(RandomPolicy::new(env, spec.eval_seed().wrapping_add(1))),
        AgentKind::Oracle => Box::new(oracle_policy(env, spec.trainer.discount)?),
    };
    evaluate_and_write(args.agent, policy.as_mut(), &spec)
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let env = match &args.config {
        Some(path) => EnvConfig::load(path)?,
        None => EnvConfig::table_one().with_num_workers(args.workers),
    };
    let mdp = build_exact_mdp(&env)?;
    let vi = value_iteration(&mdp, args.discount, args.tolerance)?;
    println!(
        "{} states, {} actions, {} sweeps, final residual {:e}",
        mdp.n_states(),
        mdp.n_actions(),
        vi.sweeps,
        vi.residuals.last().copied().unwrap_or(0.0)
    );
    let mean_v = vi.v.iter().sum::<f64>() / vi.v.len() as f64;
    println!("mean optimal value {mean_v:.6}");
    if let Some(out) = &args.out {
        vi.write_csv(out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn summary_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("summary.csv")
    } else {
        path.to_path_buf()
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => execute(&load_spec(&args.spec)?, args.spec.margin),
        Command::Sweep(args) => {
            let mut spec = load_spec(&args.spec)?;
            spec.sweep = Some(SweepAxis {
                parameter: args.param.clone(),
                values: args.values.clone(),
            });
            execute(&spec, args.spec.margin)
        }
        Command::Train(args) => train(&args).map(|_| true),
        Command::Evaluate(args) => evaluate(&args).map(|_| true),
        Command::Oracle(args) => oracle(&args).map(|_| true),
        Command::Report(args) => {
            let path = summary_path(&args.path);
            let rows = read_summary(&path)?;
            if rows.is_empty() {
                bail!("{} has no rows", path.display());
            }
            let agents: BTreeMap<AgentKind, ()> = rows.iter().map(|r| (r.agent, ())).collect();
            println!("agents: {:?}", agents.keys().collect::<Vec<_>>());
            report_rows(&rows, args.margin, args.trend_tolerance)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
