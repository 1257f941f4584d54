//! Exact transition model and value iteration for small instances.
//!
//! Workers evolve independently, so each `(s, a)` row of the kernel is the
//! product of per-worker factors: the channel flag is a Bernoulli draw with
//! the transmission success probability, the battery takes at most two
//! consumption outcomes before the (clamped) recharge, and coverage is
//! Bernoulli(q_l). Rows are stored sparsely.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::EnvConfig;
use crate::env::{channel_cost, consume_energy, energy_cost, reward, success_probability};
use crate::error::{Error, Result};
use crate::space::{action_space_size, decode_action, decode_state, state_space_size};
use crate::tabular::argmax;

/// Largest number of state-action pairs [`build_exact_mdp`] will enumerate.
pub const MAX_EXACT_PAIRS: u64 = 10_000_000;

/// Sweep limit for [`value_iteration`].
pub const MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMdp {
    n_states: usize,
    n_actions: usize,
    /// Row `s * n_actions + a` spans `offsets[row]..offsets[row + 1]`.
    offsets: Vec<usize>,
    next: Vec<u32>,
    prob: Vec<f64>,
    expected_reward: Vec<f64>,
}

impl ExactMdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Successor states of `(s, a)` with their probabilities, ascending by
    /// state index.
    pub fn transitions(&self, state: usize, action: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = state * self.n_actions + action;
        let span = self.offsets[row]..self.offsets[row + 1];
        self.next[span.clone()]
            .iter()
            .zip(&self.prob[span])
            .map(|(&s, &p)| (s as usize, p))
    }

    /// P(s' | s, a), zero for unlisted successors.
    pub fn probability(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions(state, action)
            .find(|&(s, _)| s == next)
            .map_or(0.0, |(_, p)| p)
    }

    /// Expected one-step reward R̄(s, a).
    pub fn expected_reward(&self, state: usize, action: usize) -> f64 {
        self.expected_reward[state * self.n_actions + action]
    }
}

/// Per-worker next-state factor: `(local digit, probability)` pairs.
fn worker_factor(
    config: &EnvConfig,
    index: usize,
    worker: &crate::space::WorkerState,
    channel: usize,
    recharge: usize,
) -> Result<Vec<(u64, f64)>> {
    let levels = config.max_energy as u64 + 1;
    let p_ok = success_probability(worker, channel, config)?;
    let p_two = config.p_energy_two[index];
    let q = config.p_in_coverage[index];

    let mut energy: Vec<(usize, f64)> = Vec::with_capacity(2);
    let mut add_energy = |two: bool, p: f64| {
        let e = (consume_energy(worker.energy, two) + recharge).min(config.max_energy);
        match energy.iter_mut().find(|(x, _)| *x == e) {
            Some((_, acc)) => *acc += p,
            None => energy.push((e, p)),
        }
    };
    if worker.energy >= 2 {
        add_energy(true, p_two);
        add_energy(false, 1.0 - p_two);
    } else {
        add_energy(false, 1.0);
    }

    let mut out = Vec::with_capacity(8);
    for (x, px) in [(0u64, 1.0 - q), (1, q)] {
        for &(e, pe) in &energy {
            for (w, pw) in [(0u64, 1.0 - p_ok), (1, p_ok)] {
                let p = px * pe * pw;
                if p > 0.0 {
                    out.push((w + 2 * e as u64 + 2 * levels * x, p));
                }
            }
        }
    }
    Ok(out)
}

pub fn build_exact_mdp(config: &EnvConfig) -> Result<ExactMdp> {
    config.validate()?;
    let n_states = state_space_size(config);
    let n_actions = action_space_size(config);
    let pairs = n_states.saturating_mul(n_actions);
    if pairs > MAX_EXACT_PAIRS {
        return Err(Error::MdpTooLarge {
            pairs,
            limit: MAX_EXACT_PAIRS,
        });
    }
    let radix = 4 * (config.max_energy as u64 + 1);
    let mut mdp = ExactMdp {
        n_states: n_states as usize,
        n_actions: n_actions as usize,
        offsets: Vec::with_capacity(pairs as usize + 1),
        next: Vec::new(),
        prob: Vec::new(),
        expected_reward: Vec::with_capacity(pairs as usize),
    };
    mdp.offsets.push(0);

    let l = config.num_workers;
    for s in 0..n_states {
        let state = decode_state(s, config)?;
        for a in 0..n_actions {
            let action = decode_action(a, config)?;
            let mut utilities = Vec::with_capacity(l);
            let mut channel_costs = Vec::with_capacity(l);
            let mut energy_costs = Vec::with_capacity(l);
            let mut row: Vec<(u64, f64)> = vec![(0, 1.0)];
            let mut place = 1u64;
            for (i, (w, act)) in state.workers.iter().zip(&action.workers).enumerate() {
                utilities.push(config.utility_delta * success_probability(w, act.channel, config)?);
                channel_costs.push(channel_cost(act.channel, config)?);
                energy_costs.push(energy_cost(w, i, act.recharge, config));
                let factor = worker_factor(config, i, w, act.channel, act.recharge)?;
                row = row
                    .iter()
                    .flat_map(|&(idx, p)| factor.iter().map(move |&(d, pd)| (idx + d * place, p * pd)))
                    .collect();
                place *= radix;
            }
            row.sort_by_key(|&(idx, _)| idx);
            for (idx, p) in row {
                mdp.next.push(idx as u32);
                mdp.prob.push(p);
            }
            mdp.offsets.push(mdp.next.len());
            mdp.expected_reward
                .push(reward(&utilities, &channel_costs, &energy_costs, config));
        }
    }
    Ok(mdp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterationResult {
    /// Q*(s, a), row-major by state.
    pub q: Vec<f64>,
    /// V*(s) = max_a Q*(s, a).
    pub v: Vec<f64>,
    /// Greedy action per state, lowest index on ties.
    pub policy: Vec<usize>,
    pub sweeps: usize,
    /// Sup-norm change of Q over each sweep.
    pub residuals: Vec<f64>,
    n_actions: usize,
}

impl ValueIterationResult {
    pub fn q_value(&self, state: usize, action: usize) -> f64 {
        self.q[state * self.n_actions + action]
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// CSV of `state,action,q` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "state,action,q")?;
            for (i, q) in self.q.iter().enumerate() {
                writeln!(w, "{},{},{q}", i / self.n_actions, i % self.n_actions)?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Synchronous sweeps of `Q ← R̄ + γ·P·max_a' Q` until the sup-norm change
/// drops below `tol`.
pub fn value_iteration(mdp: &ExactMdp, gamma: f64, tol: f64) -> Result<ValueIterationResult> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!("discount {gamma} outside [0, 1)")));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = mdp.expected_reward.clone();
    let mut v: Vec<f64> = (0..ns)
        .map(|s| q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut residuals = Vec::new();
    let mut sweeps = 0;
    if gamma > 0.0 {
        loop {
            if sweeps >= MAX_SWEEPS {
                return Err(Error::NoConvergence {
                    sweeps,
                    residual: residuals.last().copied().unwrap_or(f64::INFINITY),
                });
            }
            sweeps += 1;
            let mut residual: f64 = 0.0;
            for (row, q_sa) in q.iter_mut().enumerate() {
                let span = mdp.offsets[row]..mdp.offsets[row + 1];
                let future: f64 = mdp.next[span.clone()]
                    .iter()
                    .zip(&mdp.prob[span])
                    .map(|(&s2, &p)| p * v[s2 as usize])
                    .sum();
                let updated = mdp.expected_reward[row] + gamma * future;
                residual = residual.max((updated - *q_sa).abs());
                *q_sa = updated;
            }
            for (s, vs) in v.iter_mut().enumerate() {
                *vs = q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            residuals.push(residual);
            if residual < tol {
                break;
            }
        }
    }
    let policy = (0..ns).map(|s| argmax(&q[s * na..(s + 1) * na])).collect();
    Ok(ValueIterationResult {
        q,
        v,
        policy,
        sweeps,
        residuals,
        n_actions: na,
    })
}
