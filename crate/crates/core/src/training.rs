//! Pieces shared by the learning agents: exploration schedule and
//! per-episode training records.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear annealing from `start` to `end` over `horizon` iterations, then
/// held at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl EpsilonSchedule {
    pub const DEFAULT_START: f64 = 0.9;

    pub fn linear(start: f64, end: f64, horizon: u64) -> Self {
        EpsilonSchedule { start, end, horizon }
    }

    pub fn constant(epsilon: f64) -> Self {
        EpsilonSchedule {
            start: epsilon,
            end: epsilon,
            horizon: 0,
        }
    }

    /// Anneals from 0.9 to zero over 80% of `total_iterations`.
    pub fn for_run(total_iterations: u64) -> Self {
        Self::linear(Self::DEFAULT_START, 0.0, (total_iterations * 4).div_ceil(5))
    }

    pub fn epsilon_at(&self, iteration: u64) -> f64 {
        if self.horizon == 0 {
            return self.end;
        }
        let frac = iteration as f64 / self.horizon as f64;
        (self.start - (self.start - self.end) * frac).max(self.end)
    }
}

/// Summary of one training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub episode: usize,
    pub reward: f64,
    /// Mean minibatch loss over the episode's learning steps (0 when none).
    pub mean_loss: f64,
    /// Exploration rate at the last step of the episode.
    pub epsilon: f64,
    /// Times each channel index was chosen, summed over workers.
    pub channel_counts: Vec<u64>,
}

pub fn write_training_csv(path: &Path, records: &[TrainingRecord], num_channels: usize) -> Result<()> {
    let mut out = Vec::new();
    write!(out, "episode,reward,mean_loss,epsilon").unwrap();
    for c in 0..=num_channels {
        write!(out, ",channel_{c}").unwrap();
    }
    writeln!(out).unwrap();
    for r in records {
        write!(out, "{},{},{},{}", r.episode, r.reward, r.mean_loss, r.epsilon).unwrap();
        for c in &r.channel_counts {
            write!(out, ",{c}").unwrap();
        }
        writeln!(out).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
