//! Tabular Q-learning over encoded state and action indices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::EnvConfig;
use crate::env::{seeded_rng, Env};
use crate::error::{Error, Result};
use crate::space::{action_space_size, decode_action, encode_state, state_space_size};
use crate::training::{EpsilonSchedule, TrainingRecord};

/// Tables above this many entries are refused.
pub const MAX_TABLE_ENTRIES: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    pub learning_rate: f64,
    pub discount: f64,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, learning_rate: f64, discount: f64) -> Result<Self> {
        let entries = n_states as u64 * n_actions as u64;
        if entries > MAX_TABLE_ENTRIES {
            return Err(Error::InvalidConfig(format!(
                "Q-table with {entries} entries exceeds limit {MAX_TABLE_ENTRIES}"
            )));
        }
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {learning_rate} outside (0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidConfig(format!("discount {discount} outside [0, 1)")));
        }
        Ok(QTable {
            n_states,
            n_actions,
            values: vec![0.0; entries as usize],
            learning_rate,
            discount,
        })
    }

    pub fn for_config(config: &EnvConfig, learning_rate: f64, discount: f64) -> Result<Self> {
        let size = |n: u64| {
            usize::try_from(n).map_err(|_| Error::InvalidConfig(format!("space of {n} too large")))
        };
        Self::new(
            size(state_space_size(config))?,
            size(action_space_size(config))?,
            learning_rate,
            discount,
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn check(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.n_states {
            return Err(Error::IndexOutOfRange {
                index: state as u64,
                size: self.n_states as u64,
            });
        }
        if action >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                index: action as u64,
                size: self.n_actions as u64,
            });
        }
        Ok(())
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn best_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    /// `Q(s,a) ← (1−β)·Q(s,a) + β·(r + γ·max_a' Q(s',a'))` with the table's
    /// own learning rate. Returns the new value.
    pub fn q_update(&mut self, state: usize, action: usize, reward: f64, next_state: usize) -> Result<f64> {
        self.q_update_with_rate(state, action, reward, next_state, self.learning_rate)
    }

    pub fn q_update_with_rate(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next_state: usize,
        rate: f64,
    ) -> Result<f64> {
        self.check(state, action)?;
        self.check(next_state, 0)?;
        let target = reward + self.discount * self.max_value(next_state);
        let value = (1.0 - rate) * self.get(state, action) + rate * target;
        self.set(state, action, value);
        Ok(value)
    }

    /// Uniform random action with probability `epsilon`, otherwise the
    /// lowest-index maximizer.
    pub fn select_action_epsilon_greedy<R: Rng + ?Sized>(&self, state: usize, epsilon: f64, rng: &mut R) -> usize {
        if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..self.n_actions)
        } else {
            self.best_action(state)
        }
    }

    /// Greedy action for every state.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| self.best_action(s)).collect()
    }

    /// CSV of `state,action,value` triples, one per entry in index order.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "state,action,value")?;
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    writeln!(w, "{s},{a},{}", self.get(s, a))?;
                }
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`QTable::save_csv`] into a table of the given
    /// dimensions; entries absent from the file stay zero.
    pub fn load_csv(path: &Path, n_states: usize, n_actions: usize, learning_rate: f64, discount: f64) -> Result<Self> {
        let mut table = QTable::new(n_states, n_actions, learning_rate, discount)?;
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        for row in reader.deserialize::<(usize, usize, f64)>() {
            let (s, a, v) = row.map_err(|e| Error::csv(path, e))?;
            table.check(s, a)?;
            table.set(s, a, v);
        }
        Ok(table)
    }

    /// Binary form: magic, u64 state and action counts, then f64 LE values
    /// row-major by state.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            w.write_all(b"FQTB")?;
            w.write_all(&(self.n_states as u64).to_le_bytes())?;
            w.write_all(&(self.n_actions as u64).to_le_bytes())?;
            crate::neural::write_f64s(&mut w, &self.values)?;
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load_binary(path: &Path, learning_rate: f64, discount: f64) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != b"FQTB" {
            return Err(Error::Checkpoint("bad Q-table magic".into()));
        }
        let n_states = crate::neural::read_u64(&mut r)? as usize;
        let n_actions = crate::neural::read_u64(&mut r)? as usize;
        let mut table = QTable::new(n_states, n_actions, learning_rate, discount)?;
        crate::neural::read_f64s(&mut r, &mut table.values)?;
        Ok(table)
    }
}

/// Step size of each Q-learning update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { rate: f64 },
    /// `(1 + n)^-power` where `n` counts earlier updates of the same pair.
    VisitDecay { power: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub discount: f64,
    pub learning_rate: LearningRate,
    /// `None` anneals 0.9 → 0 over 80% of the run.
    pub epsilon: Option<EpsilonSchedule>,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            episodes: 10_000,
            steps_per_episode: 100,
            discount: 0.9,
            learning_rate: LearningRate::Constant { rate: 0.1 },
            epsilon: None,
            seed: 0,
        }
    }
}

impl QLearningConfig {
    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        self.epsilon.unwrap_or_else(|| {
            EpsilonSchedule::for_run((self.episodes * self.steps_per_episode) as u64)
        })
    }
}

/// Trains a Q-table online against a fresh environment. The environment is
/// seeded with `seed`, the agent's exploration stream with `seed + 1`.
pub fn train_q_learning(env_config: &EnvConfig, config: &QLearningConfig) -> Result<(QTable, Vec<TrainingRecord>)> {
    let base_rate = match config.learning_rate {
        LearningRate::Constant { rate } => rate,
        LearningRate::VisitDecay { .. } => 1.0,
    };
    let mut table = QTable::for_config(env_config, base_rate, config.discount)?;
    let mut visits = match config.learning_rate {
        LearningRate::VisitDecay { .. } => vec![0u32; table.values.len()],
        LearningRate::Constant { .. } => Vec::new(),
    };
    let mut env = Env::new(env_config.clone(), config.seed)?;
    let mut rng = seeded_rng(config.seed.wrapping_add(1));
    let schedule = config.epsilon_schedule();
    let mut records = Vec::with_capacity(config.episodes);
    let mut iteration = 0u64;

    for episode in 0..config.episodes {
        env.reset();
        let mut state = encode_state(env.state(), env_config)? as usize;
        let mut total = 0.0;
        let mut epsilon = schedule.epsilon_at(iteration);
        let mut channel_counts = vec![0u64; env_config.num_channels + 1];
        for _ in 0..config.steps_per_episode {
            epsilon = schedule.epsilon_at(iteration);
            let action = table.select_action_epsilon_greedy(state, epsilon, &mut rng);
            let joint = decode_action(action as u64, env_config)?;
            for w in &joint.workers {
                channel_counts[w.channel] += 1;
            }
            let outcome = env.step(&joint)?;
            let next = encode_state(&outcome.next_state, env_config)? as usize;
            let rate = match config.learning_rate {
                LearningRate::Constant { rate } => rate,
                LearningRate::VisitDecay { power } => {
                    let n = &mut visits[state * table.n_actions + action];
                    let rate = (1.0 + *n as f64).powf(-power);
                    *n = n.saturating_add(1);
                    rate
                }
            };
            table.q_update_with_rate(state, action, outcome.reward, next, rate)?;
            total += outcome.reward;
            state = next;
            iteration += 1;
        }
        records.push(TrainingRecord {
            episode,
            reward: total,
            mean_loss: 0.0,
            epsilon,
            channel_counts,
        });
    }
    Ok((table, records))
}
