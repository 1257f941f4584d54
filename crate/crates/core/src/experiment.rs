//! Experiment runner: trains and evaluates agents over an optional parameter
//! sweep and writes everything as CSV.
//!
//! Reported rewards are those of greedy evaluation rollouts of each trained
//! policy, not the ε-greedy training episodes. All agents and all sweep cells
//! are evaluated on the same evaluation seed, so they see the same random
//! stream draw for draw. Training seeds are `master_seed + cell index`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::ddqn::{run_training, TrainerConfig};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::mdp::{build_exact_mdp, value_iteration};
use crate::policy::{DqnPolicy, GreedyPolicy, Policy, RandomPolicy, TablePolicy};
use crate::tabular::{train_q_learning, LearningRate, QLearningConfig};
use crate::training::{write_training_csv, TrainingRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Dql,
    Ql,
    Greedy,
    Random,
    Oracle,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::Dql,
        AgentKind::Ql,
        AgentKind::Greedy,
        AgentKind::Random,
        AgentKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dql => "dql",
            AgentKind::Ql => "ql",
            AgentKind::Greedy => "greedy",
            AgentKind::Random => "random",
            AgentKind::Oracle => "oracle",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, AgentKind::Dql | AgentKind::Ql)
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown agent `{s}`")))
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Path of an environment TOML file; takes precedence over `env`.
    pub env_file: Option<PathBuf>,
    pub env: EnvConfig,
    pub agents: Vec<AgentKind>,
    pub trainer: TrainerConfig,
    /// Fixed Q-learning step size for the tabular agent.
    pub ql_learning_rate: f64,
    pub sweep: Option<SweepAxis>,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub smoothing_window: usize,
    pub eval_episodes: usize,
    /// Evaluation episode length; defaults to the training episode length.
    pub eval_steps: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            env_file: None,
            env: EnvConfig::table_one(),
            agents: vec![AgentKind::Dql, AgentKind::Ql, AgentKind::Greedy, AgentKind::Random],
            trainer: TrainerConfig::default(),
            ql_learning_rate: 0.1,
            sweep: None,
            output_dir: PathBuf::from("results"),
            master_seed: 0,
            smoothing_window: 100,
            eval_episodes: 100,
            eval_steps: None,
        }
    }
}

impl ExperimentSpec {
    /// Reads a TOML spec. A relative `env_file` is resolved against the spec's
    /// directory and loaded into `env`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ExperimentSpec = toml::from_str(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(file) = &spec.env_file {
            let resolved = match path.parent() {
                Some(dir) if file.is_relative() => dir.join(file),
                _ => file.clone(),
            };
            spec.env = EnvConfig::load(&resolved)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.trainer.validate()?;
        if self.agents.is_empty() {
            return Err(Error::InvalidConfig("no agents requested".into()));
        }
        if self.smoothing_window == 0 {
            return Err(Error::InvalidConfig("smoothing_window must be at least 1".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::InvalidConfig("eval_episodes must be at least 1".into()));
        }
        if !(self.ql_learning_rate > 0.0 && self.ql_learning_rate <= 1.0) {
            return Err(Error::InvalidConfig("ql_learning_rate must lie in (0, 1]".into()));
        }
        for (_, env) in self.cells()? {
            env.validate()?;
        }
        Ok(())
    }

    pub fn eval_steps(&self) -> usize {
        self.eval_steps.unwrap_or(self.trainer.steps_per_episode)
    }

    /// Evaluation seed shared by every agent and cell.
    pub fn eval_seed(&self) -> u64 {
        self.master_seed ^ 0x5E_ED0F_E7A1
    }

    /// `(sweep value, environment)` per cell; a single unswept cell when no
    /// sweep is configured.
    pub fn cells(&self) -> Result<Vec<(Option<f64>, EnvConfig)>> {
        match &self.sweep {
            None => Ok(vec![(None, self.env.clone())]),
            Some(axis) => axis
                .values
                .iter()
                .map(|&v| Ok((Some(v), self.env.clone().with_parameter(&axis.parameter, v)?)))
                .collect(),
        }
    }
}

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub episode: usize,
    pub reward: f64,
    /// Σ over steps of the normalized utility term.
    pub utility: f64,
    /// Σ over steps of the normalized channel cost term.
    pub channel_cost: f64,
    /// Σ over steps of the normalized energy cost term.
    pub energy_cost: f64,
    /// Successful transmissions, summed over workers.
    pub successes: u64,
    /// `selections[x][c]`: channel `c` chosen while the worker's coverage
    /// flag was `x`, summed over workers.
    pub selections: [Vec<u64>; 2],
}

/// Channel choices per worker, split by that worker's coverage flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHistogram {
    /// `counts[worker][in_coverage][channel]`.
    pub counts: Vec<[Vec<u64>; 2]>,
}

impl PolicyHistogram {
    pub fn new(num_workers: usize, num_channels: usize) -> Self {
        PolicyHistogram {
            counts: vec![[vec![0; num_channels + 1], vec![0; num_channels + 1]]; num_workers],
        }
    }

    /// Share of `worker`'s decisions in the given coverage state that chose
    /// `channel`, or `None` if there were no such decisions.
    pub fn fraction(&self, worker: usize, in_coverage: bool, channel: usize) -> Option<f64> {
        let row = &self.counts[worker][in_coverage as usize];
        let total: u64 = row.iter().sum();
        (total > 0).then(|| row[channel] as f64 / total as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("worker,in_coverage,channel,count\n");
        for (w, by_x) in self.counts.iter().enumerate() {
            for (x, row) in by_x.iter().enumerate() {
                for (c, n) in row.iter().enumerate() {
                    writeln!(out, "{},{x},{c},{n}", w + 1).unwrap();
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<MetricsRecord>,
    pub histogram: PolicyHistogram,
}

/// Rolls `policy` out for `episodes` episodes of `steps` steps on a fresh
/// environment seeded with `seed`.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    env_config: &EnvConfig,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Result<Evaluation> {
    let mut env = Env::new(env_config.clone(), seed)?;
    let n_channels = env_config.num_channels;
    let mut histogram = PolicyHistogram::new(env_config.num_workers, n_channels);
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        env.reset();
        let mut rec = MetricsRecord {
            episode,
            reward: 0.0,
            utility: 0.0,
            channel_cost: 0.0,
            energy_cost: 0.0,
            successes: 0,
            selections: [vec![0; n_channels + 1], vec![0; n_channels + 1]],
        };
        for _ in 0..steps {
            let action = policy.act(env.state())?;
            for (w, (ws, a)) in env.state().workers.iter().zip(&action.workers).enumerate() {
                let x = ws.in_coverage as usize;
                rec.selections[x][a.channel] += 1;
                histogram.counts[w][x][a.channel] += 1;
            }
            let outcome = env.step(&action)?;
            let terms = outcome.terms(env_config);
            rec.reward += outcome.reward;
            rec.utility += terms.utility;
            rec.channel_cost += terms.channel;
            rec.energy_cost += terms.energy;
            rec.successes += outcome.success.iter().filter(|&&s| s).count() as u64;
        }
        records.push(rec);
    }
    Ok(Evaluation { records, histogram })
}

/// Channel-choice histogram of `num_rollouts` greedy episodes.
pub fn policy_histogram(
    policy: &mut dyn Policy,
    env_config: &EnvConfig,
    num_rollouts: usize,
    steps: usize,
    seed: u64,
) -> Result<PolicyHistogram> {
    Ok(evaluate_policy(policy, env_config, num_rollouts, steps, seed)?.histogram)
}

pub fn metrics_csv(records: &[MetricsRecord], num_channels: usize) -> String {
    let mut out = String::from("episode,reward,utility,channel_cost,energy_cost,successes");
    for x in ["out", "in"] {
        for c in 0..=num_channels {
            write!(out, ",ch{c}_{x}").unwrap();
        }
    }
    out.push('\n');
    for r in records {
        write!(
            out,
            "{},{},{},{},{},{}",
            r.episode, r.reward, r.utility, r.channel_cost, r.energy_cost, r.successes
        )
        .unwrap();
        for row in &r.selections {
            for n in row {
                write!(out, ",{n}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// Trailing moving average; the first `window − 1` points average the
/// available prefix.
pub fn smooth(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    if window == 0 {
        return Err(Error::InvalidConfig("smoothing window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub parameter: String,
    pub value: Option<f64>,
    pub agent: AgentKind,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub eval_episodes: usize,
    pub eval_steps: usize,
    pub smoothing_window: usize,
    pub final_smoothed_reward: f64,
    pub mean_reward: f64,
    pub mean_utility: f64,
    pub mean_channel_cost: f64,
    pub mean_energy_cost: f64,
}

const SUMMARY_HEADER: &str = "cell,parameter,value,agent,train_seed,eval_seed,eval_episodes,eval_steps,smoothing_window,final_smoothed_reward,mean_reward,mean_utility,mean_channel_cost,mean_energy_cost";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.cell,
            r.parameter,
            value,
            r.agent,
            r.train_seed,
            r.eval_seed,
            r.eval_episodes,
            r.eval_steps,
            r.smoothing_window,
            r.final_smoothed_reward,
            r.mean_reward,
            r.mean_utility,
            r.mean_channel_cost,
            r.mean_energy_cost
        )
        .unwrap();
    }
    out
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}

/// Everything one agent produced in one cell.
#[derive(Debug)]
pub struct AgentRun {
    pub summary: SummaryRow,
    pub training: Vec<TrainingRecord>,
    pub evaluation: Evaluation,
}

/// Trainer settings for the DQL agent of a cell.
pub fn dql_config(spec: &ExperimentSpec, train_seed: u64) -> TrainerConfig {
    TrainerConfig {
        seed: train_seed,
        ..spec.trainer.clone()
    }
}

/// Q-learning settings for the tabular agent of a cell: the DQL episode
/// budget, discount and exploration schedule with a fixed step size.
pub fn ql_config(spec: &ExperimentSpec, train_seed: u64) -> QLearningConfig {
    QLearningConfig {
        episodes: spec.trainer.episodes,
        steps_per_episode: spec.trainer.steps_per_episode,
        discount: spec.trainer.discount,
        learning_rate: LearningRate::Constant {
            rate: spec.ql_learning_rate,
        },
        epsilon: Some(spec.trainer.epsilon_schedule()),
        seed: train_seed,
    }
}

/// Greedy policy of the exact value-iteration solution.
pub fn oracle_policy(env: &EnvConfig, discount: f64) -> Result<TablePolicy> {
    let mdp = build_exact_mdp(env)?;
    let vi = value_iteration(&mdp, discount, 1e-8)?;
    Ok(TablePolicy::new(env, vi.policy))
}

/// Trains (if needed) and evaluates one agent on one environment.
pub fn run_agent(
    kind: AgentKind,
    env: &EnvConfig,
    spec: &ExperimentSpec,
    train_seed: u64,
) -> Result<(Vec<TrainingRecord>, Evaluation)> {
    let eval_seed = spec.eval_seed();
    let steps = spec.eval_steps();
    let (training, mut policy): (Vec<TrainingRecord>, Box<dyn Policy>) = match kind {
        AgentKind::Dql => {
            let (agent, records) = run_training(env, &dql_config(spec, train_seed))?;
            (records, Box::new(DqnPolicy::new(agent)))
        }
        AgentKind::Ql => {
            let (table, records) = train_q_learning(env, &ql_config(spec, train_seed))?;
            (records, Box::new(TablePolicy::from_q_table(env, &table)))
        }
        AgentKind::Greedy => (Vec::new(), Box::new(GreedyPolicy::new(env))),
        AgentKind::Random => (Vec::new(), Box::new(RandomPolicy::new(env, eval_seed.wrapping_add(1)))),
        AgentKind::Oracle => (Vec::new(), Box::new(oracle_policy(env, spec.trainer.discount)?)),
    };
    let evaluation = evaluate_policy(policy.as_mut(), env, spec.eval_episodes, steps, eval_seed)?;
    Ok((training, evaluation))
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub runs: Vec<AgentRun>,
}

impl ExperimentOutcome {
    pub fn summaries(&self) -> Vec<SummaryRow> {
        self.runs.iter().map(|r| r.summary.clone()).collect()
    }

    pub fn run(&self, cell: usize, agent: AgentKind) -> Option<&AgentRun> {
        self.runs
            .iter()
            .find(|r| r.summary.cell == cell && r.summary.agent == agent)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs every agent in every sweep cell and writes, under `output_dir`:
/// `summary.csv`, `metadata.toml`, and per cell and agent
/// `cell{i}_{agent}_eval.csv`, `cell{i}_{agent}_policy.csv` and, for learning
/// agents, `cell{i}_{agent}_train.csv`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let out_dir = &spec.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let parameter = spec
        .sweep
        .as_ref()
        .map(|s| s.parameter.clone())
        .unwrap_or_default();
    let mut runs = Vec::new();
    for (cell, (value, env)) in spec.cells()?.into_iter().enumerate() {
        let train_seed = spec.master_seed.wrapping_add(cell as u64);
        for &kind in &spec.agents {
            let (training, evaluation) = run_agent(kind, &env, spec, train_seed)?;
            let stem = format!("cell{cell}_{kind}");
            if kind.is_learning() {
                write_training_csv(&out_dir.join(format!("{stem}_train.csv")), &training, env.num_channels)?;
            }
            write_file(
                &out_dir.join(format!("{stem}_eval.csv")),
                &metrics_csv(&evaluation.records, env.num_channels),
            )?;
            write_file(
                &out_dir.join(format!("{stem}_policy.csv")),
                &evaluation.histogram.to_csv(),
            )?;
            let rewards: Vec<f64> = evaluation.records.iter().map(|r| r.reward).collect();
            let smoothed = smooth(&rewards, spec.smoothing_window)?;
            let n = evaluation.records.len() as f64;
            let mean = |f: fn(&MetricsRecord) -> f64| evaluation.records.iter().map(f).sum::<f64>() / n;
            let summary = SummaryRow {
                cell,
                parameter: parameter.clone(),
                value,
                agent: kind,
                train_seed,
                eval_seed: spec.eval_seed(),
                eval_episodes: spec.eval_episodes,
                eval_steps: spec.eval_steps(),
                smoothing_window: spec.smoothing_window,
                final_smoothed_reward: *smoothed.last().expect("nonempty"),
                mean_reward: mean(|r| r.reward),
                mean_utility: mean(|r| r.utility),
                mean_channel_cost: mean(|r| r.channel_cost),
                mean_energy_cost: mean(|r| r.energy_cost),
            };
            runs.push(AgentRun {
                summary,
                training,
                evaluation,
            });
        }
    }
    let outcome = ExperimentOutcome { runs };
    write_file(&out_dir.join("summary.csv"), &summary_csv(&outcome.summaries()))?;
    write_file(&out_dir.join("metadata.toml"), &metadata(spec))?;
    Ok(outcome)
}

fn metadata(spec: &ExperimentSpec) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# final_smoothed_reward: trailing {}-episode moving average of per-episode\n\
         # reward (sum of step rewards over {} steps) from greedy evaluation\n\
         # rollouts of the trained policy, taken at the last evaluation episode.",
        spec.smoothing_window,
        spec.eval_steps()
    )
    .unwrap();
    let mut resolved = spec.clone();
    resolved.env_file = None;
    out.push_str(&toml::to_string(&resolved).expect("spec serializes"));
    out
}

/// One comparison inside a [`OrderingReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
    /// Informational checks do not affect the verdict.
    pub gating: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport {
    pub checks: Vec<OrderingCheck>,
}

impl OrderingReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match (c.passed, c.gating) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "info",
            };
            writeln!(out, "{tag}  {}  ({} vs {})", c.description, c.lhs, c.rhs).unwrap();
        }
        writeln!(out, "{}", if self.passed() { "PASS" } else { "FAIL" }).unwrap();
        out
    }
}

fn beats(a: f64, b: f64, margin: f64) -> bool {
    a > b + margin * b.abs()
}

/// Checks DQL > greedy and greedy > random, each by a relative `margin`,
/// and DQL ≥ QL. QL ≥ greedy is reported but does not gate.
pub fn reward_ordering_report(rewards: &BTreeMap<AgentKind, f64>, margin: f64) -> Result<OrderingReport> {
    let get = |k: AgentKind| {
        rewards
            .get(&k)
            .copied()
            .ok_or_else(|| Error::MissingAgent(k.name().into()))
    };
    let (dql, ql, greedy, random) = (
        get(AgentKind::Dql)?,
        get(AgentKind::Ql)?,
        get(AgentKind::Greedy)?,
        get(AgentKind::Random)?,
    );
    let pct = margin * 100.0;
    let checks = vec![
        OrderingCheck {
            description: format!("dql > greedy by {pct}%"),
            lhs: dql,
            rhs: greedy,
            passed: beats(dql, greedy, margin),
            gating: true,
        },
        OrderingCheck {
            description: format!("greedy > random by {pct}%"),
            lhs: greedy,
            rhs: random,
            passed: beats(greedy, random, margin),
            gating: true,
        },
        OrderingCheck {
            description: "dql >= ql".into(),
            lhs: dql,
            rhs: ql,
            passed: dql >= ql,
            gating: true,
        },
        OrderingCheck {
            description: "ql >= greedy".into(),
            lhs: ql,
            rhs: greedy,
            passed: ql >= greedy,
            gating: false,
        },
    ];
    Ok(OrderingReport { checks })
}

/// Per-cell final smoothed rewards keyed by agent.
pub fn rewards_by_cell(rows: &[SummaryRow]) -> BTreeMap<usize, BTreeMap<AgentKind, f64>> {
    let mut out: BTreeMap<usize, BTreeMap<AgentKind, f64>> = BTreeMap::new();
    for r in rows {
        out.entry(r.cell).or_default().insert(r.agent, r.final_smoothed_reward);
    }
    out
}

/// Whether `values` never drops by more than `tolerance` times its range
/// from one point to the next. Returns the offending indices.
pub fn non_decreasing_within(values: &[f64], tolerance: f64) -> (bool, Vec<usize>) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = tolerance * (max - min);
    let bad: Vec<usize> = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] < w[0] - slack)
        .map(|(i, _)| i + 1)
        .collect();
    (bad.is_empty(), bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_examples() {
        assert_eq!(smooth(&[1.0, 5.0, 2.0], 1).unwrap(), vec![1.0, 5.0, 2.0]);
        assert_eq!(smooth(&[3.0; 5], 3).unwrap(), vec![3.0; 5]);
        assert_eq!(smooth(&[0.0, 2.0, 4.0], 2).unwrap(), vec![0.0, 1.0, 3.0]);
        assert!(matches!(smooth(&[], 2), Err(Error::EmptySeries)));
        assert!(smooth(&[1.0], 0).is_err());
    }

    fn rewards(d: f64, q: f64, g: f64, r: f64) -> BTreeMap<AgentKind, f64> {
        [
            (AgentKind::Dql, d),
            (AgentKind::Ql, q),
            (AgentKind::Greedy, g),
            (AgentKind::Random, r),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn reported_magnitudes_pass() {
        let report = reward_ordering_report(&rewards(4300.0, 2700.0, 2550.0, 480.0), 0.1).unwrap();
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn equal_rewards_fail() {
        let report = reward_ordering_report(&rewards(100.0, 100.0, 100.0, 100.0), 0.0).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn margin_is_enforced() {
        let report = reward_ordering_report(&rewards(105.0, 50.0, 100.0, 10.0), 0.1).unwrap();
        assert!(!report.passed());
        let report = reward_ordering_report(&rewards(-5.0, -10.0, -20.0, -40.0), 0.1).unwrap();
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn missing_agent() {
        let mut r = rewards(1.0, 1.0, 1.0, 1.0);
        r.remove(&AgentKind::Ql);
        assert!(matches!(reward_ordering_report(&r, 0.1), Err(Error::MissingAgent(_))));
    }

    #[test]
    fn trend_tolerance() {
        assert!(non_decreasing_within(&[0.0, 1.0, 2.0, 3.0], 0.05).0);
        assert!(non_decreasing_within(&[0.0, 1.0, 0.9, 10.0], 0.05).0);
        let (ok, bad) = non_decreasing_within(&[0.0, 1.0, 0.4, 10.0], 0.05);
        assert!(!ok);
        assert_eq!(bad, vec![2]);
    }

    #[test]
    fn histogram_fraction() {
        let mut h = PolicyHistogram::new(1, 3);
        assert_eq!(h.fraction(0, false, 2), None);
        h.counts[0][0][2] = 3;
        h.counts[0][0][3] = 1;
        assert_eq!(h.fraction(0, false, 2), Some(0.75));
    }

    #[test]
    fn greedy_evaluation_records_decompose() {
        let env = EnvConfig::table_one();
        let mut p = GreedyPolicy::new(&env);
        let eval = evaluate_policy(&mut p, &env, 5, 50, 1).unwrap();
        for r in &eval.records {
            assert!((r.utility - r.channel_cost - r.energy_cost - r.reward).abs() < 1e-9);
            assert!(r.reward <= env.reward_upper_bound() * 50.0);
            assert!(r.reward >= env.reward_lower_bound() * 50.0);
            assert_eq!(r.selections[0][3] + r.selections[1][3], 150);
        }
        assert_eq!(eval.histogram.fraction(0, true, 3), Some(1.0));
    }

    #[test]
    fn spec_defaults_round_trip() {
        let spec = ExperimentSpec::default();
        let text = toml::to_string(&spec).unwrap();
        let back: ExperimentSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn agent_names_parse() {
        for k in AgentKind::ALL {
            assert_eq!(k.name().parse::<AgentKind>().unwrap(), k);
        }
        assert!("dqn".parse::<AgentKind>().is_err());
    }
}
