//! Network dynamics and reward.
//!
//! One call to [`step`] advances every worker independently through the same
//! sequence: transmission attempt, utility and costs, energy consumption then
//! recharge, a fresh coverage draw, and the new channel flag (the success
//! indicator of the attempt just made). Each worker consumes exactly three
//! uniform draws per step whatever the outcome, so two runs sharing a seed
//! stay aligned draw for draw even when their configurations differ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::EnvConfig;
use crate::error::{Error, Result};
use crate::space::{JointAction, NetworkState, WorkerAction, WorkerState};

/// Seedable generator used by every stochastic component.
pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: NetworkState,
    /// ℐ_l / Δ for each worker.
    pub success: Vec<bool>,
    /// 𝒞_l^c.
    pub channel_costs: Vec<f64>,
    /// 𝒞_l^e.
    pub energy_costs: Vec<f64>,
}

/// Normalized parts of a reward: `reward = utility - channel - energy`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardTerms {
    pub utility: f64,
    pub channel: f64,
    pub energy: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.utility - self.channel - self.energy
    }
}

impl StepOutcome {
    pub fn utilities(&self, config: &EnvConfig) -> Vec<f64> {
        self.success
            .iter()
            .map(|&ok| if ok { config.utility_delta } else { 0.0 })
            .collect()
    }

    pub fn terms(&self, config: &EnvConfig) -> RewardTerms {
        reward_terms(
            &self.utilities(config),
            &self.channel_costs,
            &self.energy_costs,
            config,
        )
    }
}

/// Whether a transmission on `channel` reaches `worker`, given a uniform
/// `draw` in `[0, 1)`. Requires a real channel, a non-empty battery and, for
/// the default channel, coverage.
pub fn transmission_success(
    worker: &WorkerState,
    channel: usize,
    draw: f64,
    config: &EnvConfig,
) -> Result<bool> {
    let p = success_probability(worker, channel, config)?;
    Ok(draw < p)
}

/// Probability that [`transmission_success`] returns true for a uniform draw.
pub fn success_probability(worker: &WorkerState, channel: usize, config: &EnvConfig) -> Result<f64> {
    let p = config.channel_success_probability(channel)?;
    let reachable = channel != 0
        && worker.energy >= 1
        && (channel != 1 || worker.in_coverage);
    Ok(if reachable { p } else { 0.0 })
}

/// 𝒞^c: λ_n for special channel n, nothing for the default channel or no
/// transmission.
pub fn channel_cost(channel: usize, config: &EnvConfig) -> Result<f64> {
    match channel {
        0 | 1 => Ok(0.0),
        n if n <= config.num_channels => Ok(config.channel_cost[n - 2]),
        n => Err(Error::InvalidChannel {
            channel: n,
            num_channels: config.num_channels,
        }),
    }
}

/// 𝒞^e for worker `index` (zero-based): μ_l·a^e in coverage, μ_out·a^e out.
pub fn energy_cost(worker: &WorkerState, index: usize, recharge: usize, config: &EnvConfig) -> f64 {
    let weight = if worker.in_coverage {
        config.recharge_weight[index]
    } else {
        config.recharge_weight_out
    };
    weight * recharge as f64
}

fn normalizers(config: &EnvConfig) -> (f64, f64, f64) {
    let l = config.num_workers as f64;
    (
        config.utility_delta * l,
        config.num_channels as f64 * l,
        config.recharge_weight_out * config.max_energy as f64 * l,
    )
}

pub fn reward_terms(
    utilities: &[f64],
    channel_costs: &[f64],
    energy_costs: &[f64],
    config: &EnvConfig,
) -> RewardTerms {
    let (i_max, c_max, e_max) = normalizers(config);
    RewardTerms {
        utility: config.scale_utility * utilities.iter().sum::<f64>() / i_max,
        channel: config.scale_channel * channel_costs.iter().sum::<f64>() / c_max,
        energy: config.scale_energy * energy_costs.iter().sum::<f64>() / e_max,
    }
}

/// Σ_l (α_ℐ·ℐ_l/(ΔL) − α_c·𝒞_l^c/(NL) − α_e·𝒞_l^e/(μ_out·e_max·L)).
pub fn reward(utilities: &[f64], channel_costs: &[f64], energy_costs: &[f64], config: &EnvConfig) -> f64 {
    let (i_max, c_max, e_max) = normalizers(config);
    utilities
        .iter()
        .zip(channel_costs)
        .zip(energy_costs)
        .map(|((&u, &c), &e)| {
            config.scale_utility * u / i_max
                - config.scale_channel * c / c_max
                - config.scale_energy * e / e_max
        })
        .sum()
}

/// Battery level after one step of consumption followed by recharge.
///
/// Two or more units: lose two with probability `p_two` (decided by
/// `two_unit_draw < p_two`), otherwise one. One unit always drains to zero.
/// The recharge lands afterwards and is clamped at `max_energy`.
pub fn energy_transition(energy: usize, two_unit_draw: f64, p_two: f64, recharge: usize, config: &EnvConfig) -> usize {
    let drained = consume_energy(energy, two_unit_draw < p_two);
    (drained + recharge).min(config.max_energy)
}

pub(crate) fn consume_energy(energy: usize, two_units: bool) -> usize {
    match energy {
        0 => 0,
        1 => 0,
        e if two_units => e - 2,
        e => e - 1,
    }
}

fn check_dims(state: &NetworkState, action: &JointAction, config: &EnvConfig) -> Result<()> {
    for len in [state.len(), action.workers.len()] {
        if len != config.num_workers {
            return Err(Error::DimensionMismatch {
                expected: config.num_workers,
                actual: len,
            });
        }
    }
    for a in &action.workers {
        if a.channel > config.num_channels {
            return Err(Error::InvalidChannel {
                channel: a.channel,
                num_channels: config.num_channels,
            });
        }
        if a.recharge > config.max_energy {
            return Err(Error::IndexOutOfRange {
                index: a.recharge as u64,
                size: config.max_energy as u64 + 1,
            });
        }
    }
    Ok(())
}

/// Advances the network by one iteration.
pub fn step<R: Rng + ?Sized>(
    state: &NetworkState,
    action: &JointAction,
    rng: &mut R,
    config: &EnvConfig,
) -> Result<StepOutcome> {
    check_dims(state, action, config)?;
    let l = config.num_workers;
    let mut next = Vec::with_capacity(l);
    let mut success = Vec::with_capacity(l);
    let mut utilities = Vec::with_capacity(l);
    let mut channel_costs = Vec::with_capacity(l);
    let mut energy_costs = Vec::with_capacity(l);

    for (index, (worker, &WorkerAction { channel, recharge })) in
        state.workers.iter().zip(&action.workers).enumerate()
    {
        let success_draw: f64 = rng.gen();
        let energy_draw: f64 = rng.gen();
        let coverage_draw: f64 = rng.gen();

        let ok = transmission_success(worker, channel, success_draw, config)?;
        success.push(ok);
        utilities.push(if ok { config.utility_delta } else { 0.0 });
        channel_costs.push(channel_cost(channel, config)?);
        energy_costs.push(energy_cost(worker, index, recharge, config));

        next.push(WorkerState {
            channel_good: ok,
            energy: energy_transition(
                worker.energy,
                energy_draw,
                config.p_energy_two[index],
                recharge,
                config,
            ),
            in_coverage: coverage_draw < config.p_in_coverage[index],
        });
    }

    let r = reward(&utilities, &channel_costs, &energy_costs, config);
    debug_assert!(
        r >= config.reward_lower_bound() - 1e-9 && r <= config.reward_upper_bound() + 1e-9,
        "step reward {r} outside [{}, {}]",
        config.reward_lower_bound(),
        config.reward_upper_bound()
    );
    Ok(StepOutcome {
        reward: r,
        next_state: NetworkState::new(next),
        success,
        channel_costs,
        energy_costs,
    })
}

/// Episode start: full batteries, no channel history, coverage drawn from q_l.
pub fn initial_state<R: Rng + ?Sized>(rng: &mut R, config: &EnvConfig) -> NetworkState {
    let workers = config
        .p_in_coverage
        .iter()
        .map(|&q| WorkerState {
            channel_good: false,
            energy: config.max_energy,
            in_coverage: rng.gen::<f64>() < q,
        })
        .collect();
    NetworkState::new(workers)
}

/// A stateful wrapper around [`step`] owning its configuration, current state
/// and random stream.
#[derive(Debug, Clone)]
pub struct Env {
    config: EnvConfig,
    state: NetworkState,
    rng: SimRng,
}

impl Env {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let state = initial_state(&mut rng, &config);
        Ok(Env { config, state, rng })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn set_state(&mut self, state: NetworkState) -> Result<()> {
        if state.len() != self.config.num_workers {
            return Err(Error::DimensionMismatch {
                expected: self.config.num_workers,
                actual: state.len(),
            });
        }
        self.state = state;
        Ok(())
    }

    pub fn reset(&mut self) -> &NetworkState {
        self.state = initial_state(&mut self.rng, &self.config);
        &self.state
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepOutcome> {
        let outcome = step(&self.state, action, &mut self.rng, &self.config)?;
        self.state = outcome.next_state.clone();
        Ok(outcome)
    }
}
