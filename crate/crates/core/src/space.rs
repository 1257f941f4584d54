//! State and action spaces and their integer encodings.
//!
//! Both codecs are mixed-radix with worker 1 as the least significant digit.
//! A worker's state digit is `w + 2·e + 2·(e_max+1)·X`, i.e. radices
//! `(2, e_max+1, 2)` in the order (channel flag, energy, coverage). A worker's
//! action digit is `c + (N+1)·r` with radices `(N+1, e_max+1)` in the order
//! (channel, recharge).

use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct WorkerState {
    /// w_l: the last transmission to this worker went through.
    pub channel_good: bool,
    /// e_l, in `0..=max_energy`.
    pub energy: usize,
    /// X_l: the worker is inside coverage.
    pub in_coverage: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct NetworkState {
    pub workers: Vec<WorkerState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct WorkerAction {
    /// a_l^c: 0 = skip, 1 = default channel, n ≥ 2 = special channel n.
    pub channel: usize,
    /// a_l^e: energy units bought from the power beacon.
    pub recharge: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct JointAction {
    pub workers: Vec<WorkerAction>,
}

impl NetworkState {
    pub fn new(workers: Vec<WorkerState>) -> Self {
        NetworkState { workers }
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }
}

impl JointAction {
    pub fn new(workers: Vec<WorkerAction>) -> Self {
        JointAction { workers }
    }

    /// The same (channel, recharge) pair for every worker.
    pub fn uniform(num_workers: usize, channel: usize, recharge: usize) -> Self {
        JointAction {
            workers: vec![WorkerAction { channel, recharge }; num_workers],
        }
    }
}

fn worker_state_radix(config: &EnvConfig) -> u64 {
    4 * (config.max_energy as u64 + 1)
}

fn worker_action_radix(config: &EnvConfig) -> u64 {
    (config.num_channels as u64 + 1) * (config.max_energy as u64 + 1)
}

fn checked_size(radix: u64, workers: usize) -> u64 {
    u32::try_from(workers)
        .ok()
        .and_then(|l| radix.checked_pow(l))
        .expect("space size overflows u64")
}

/// |𝒮| = (2·(e_max+1)·2)^L.
pub fn state_space_size(config: &EnvConfig) -> u64 {
    checked_size(worker_state_radix(config), config.num_workers)
}

/// |𝒜| = ((N+1)·(e_max+1))^L.
pub fn action_space_size(config: &EnvConfig) -> u64 {
    checked_size(worker_action_radix(config), config.num_workers)
}

pub fn encode_state(state: &NetworkState, config: &EnvConfig) -> Result<u64> {
    if state.len() != config.num_workers {
        return Err(Error::DimensionMismatch {
            expected: config.num_workers,
            actual: state.len(),
        });
    }
    let radix = worker_state_radix(config);
    let levels = config.max_energy as u64 + 1;
    let mut index = 0u64;
    for worker in state.workers.iter().rev() {
        if worker.energy > config.max_energy {
            return Err(Error::IndexOutOfRange {
                index: worker.energy as u64,
                size: levels,
            });
        }
        let digit = worker.channel_good as u64
            + 2 * worker.energy as u64
            + 2 * levels * worker.in_coverage as u64;
        index = index * radix + digit;
    }
    Ok(index)
}

pub fn decode_state(index: u64, config: &EnvConfig) -> Result<NetworkState> {
    let size = state_space_size(config);
    if index >= size {
        return Err(Error::IndexOutOfRange { index, size });
    }
    let radix = worker_state_radix(config);
    let levels = config.max_energy as u64 + 1;
    let mut rest = index;
    let workers = (0..config.num_workers)
        .map(|_| {
            let digit = rest % radix;
            rest /= radix;
            WorkerState {
                channel_good: digit % 2 == 1,
                energy: ((digit / 2) % levels) as usize,
                in_coverage: digit / (2 * levels) == 1,
            }
        })
        .collect();
    Ok(NetworkState { workers })
}

pub fn encode_action(action: &JointAction, config: &EnvConfig) -> Result<u64> {
    if action.workers.len() != config.num_workers {
        return Err(Error::DimensionMismatch {
            expected: config.num_workers,
            actual: action.workers.len(),
        });
    }
    let radix = worker_action_radix(config);
    let channels = config.num_channels as u64 + 1;
    let mut index = 0u64;
    for a in action.workers.iter().rev() {
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
        index = index * radix + a.channel as u64 + channels * a.recharge as u64;
    }
    Ok(index)
}

pub fn decode_action(index: u64, config: &EnvConfig) -> Result<JointAction> {
    let size = action_space_size(config);
    if index >= size {
        return Err(Error::IndexOutOfRange { index, size });
    }
    let radix = worker_action_radix(config);
    let channels = config.num_channels as u64 + 1;
    let mut rest = index;
    let workers = (0..config.num_workers)
        .map(|_| {
            let digit = rest % radix;
            rest /= radix;
            WorkerAction {
                channel: (digit % channels) as usize,
                recharge: (digit / channels) as usize,
            }
        })
        .collect();
    Ok(JointAction { workers })
}

/// Network input features: `(w_l, e_l/e_max, X_l)` per worker, concatenated.
pub fn state_features(state: &NetworkState, config: &EnvConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * state.len());
    write_state_features(state, config, &mut out);
    out
}

pub(crate) fn write_state_features(state: &NetworkState, config: &EnvConfig, out: &mut Vec<f64>) {
    out.clear();
    let scale = 1.0 / config.max_energy.max(1) as f64;
    for w in &state.workers {
        out.push(w.channel_good as u8 as f64);
        out.push(w.energy as f64 * scale);
        out.push(w.in_coverage as u8 as f64);
    }
}
