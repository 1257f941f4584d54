//! Network parameters.
//!
//! Channel indices follow the action convention: `0` means no transmission,
//! `1` is the free default channel and `2..=N` are the paid special channels.
//! Vectors indexed by special channel (`channel_cost`, `p_success_special`)
//! therefore start at channel 2.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// L, number of workers.
    pub num_workers: usize,
    /// N, number of channels including the default one.
    pub num_channels: usize,
    /// e^max, battery capacity in energy units.
    pub max_energy: usize,
    /// Δ, utility per successful transmission.
    pub utility_delta: f64,
    /// μ_1..μ_L, per-unit recharge cost weights in coverage.
    pub recharge_weight: Vec<f64>,
    /// μ_out, per-unit recharge cost weight out of coverage.
    pub recharge_weight_out: f64,
    /// λ_2..λ_N, special-channel access costs.
    pub channel_cost: Vec<f64>,
    /// p_su, default-channel success probability.
    pub p_success_default: f64,
    /// p_su^2..p_su^N, special-channel success probabilities.
    pub p_success_special: Vec<f64>,
    /// p_1..p_L, chance that a worker with two or more units consumes two.
    pub p_energy_two: Vec<f64>,
    /// q_1..q_L, chance that a worker is inside coverage.
    pub p_in_coverage: Vec<f64>,
    pub scale_utility: f64,
    pub scale_channel: f64,
    pub scale_energy: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::table_one()
    }
}

impl EnvConfig {
    /// The reference parameter set: three workers, three channels, three
    /// energy units.
    pub fn table_one() -> Self {
        EnvConfig {
            num_workers: 3,
            num_channels: 3,
            max_energy: 3,
            utility_delta: 5.0,
            recharge_weight: vec![0.1, 0.2, 0.3],
            recharge_weight_out: 0.8,
            channel_cost: vec![2.0, 3.0],
            p_success_default: 0.5,
            p_success_special: vec![0.95, 0.98],
            p_energy_two: vec![0.5; 3],
            p_in_coverage: vec![0.8; 3],
            scale_utility: 3.0,
            scale_channel: 1.0,
            scale_energy: 1.0,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: EnvConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: EnvConfig = toml::from_str(&text).map_err(|source| Error::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("EnvConfig always serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    /// Success probability of a channel choice, ignoring coverage and energy.
    /// Channel 0 (no transmission) has probability 0.
    pub fn channel_success_probability(&self, channel: usize) -> Result<f64> {
        match channel {
            0 => Ok(0.0),
            1 => Ok(self.p_success_default),
            n if n <= self.num_channels => Ok(self.p_success_special[n - 2]),
            n => Err(Error::InvalidChannel {
                channel: n,
                num_channels: self.num_channels,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let l = self.num_workers;
        if l == 0 {
            return bad("num_workers must be at least 1".into());
        }
        if self.num_channels < 2 {
            return bad("num_channels must be at least 2".into());
        }
        if self.max_energy == 0 {
            return bad("max_energy must be at least 1".into());
        }
        for (name, len, want) in [
            ("recharge_weight", self.recharge_weight.len(), l),
            ("p_energy_two", self.p_energy_two.len(), l),
            ("p_in_coverage", self.p_in_coverage.len(), l),
            ("channel_cost", self.channel_cost.len(), self.num_channels - 1),
            (
                "p_success_special",
                self.p_success_special.len(),
                self.num_channels - 1,
            ),
        ] {
            if len != want {
                return bad(format!("{name} has {len} entries, expected {want}"));
            }
        }
        if !(self.utility_delta > 0.0 && self.utility_delta.is_finite()) {
            return bad("utility_delta must be positive".into());
        }
        if self.recharge_weight.iter().any(|&m| !(m > 0.0)) {
            return bad("recharge weights must be positive".into());
        }
        if self.recharge_weight.windows(2).any(|w| w[0] > w[1]) {
            return bad("recharge weights must be non-decreasing".into());
        }
        let max_mu = self.recharge_weight.iter().copied().fold(f64::MIN, f64::max);
        if !(self.recharge_weight_out > max_mu && self.recharge_weight_out.is_finite()) {
            return bad("recharge_weight_out must exceed every in-coverage weight".into());
        }
        if self.channel_cost.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return bad("channel costs must be positive".into());
        }
        if self.channel_cost.windows(2).any(|w| w[0] >= w[1]) {
            return bad("channel costs must be strictly increasing".into());
        }
        let probabilities = std::iter::once(&self.p_success_default)
            .chain(&self.p_success_special)
            .chain(&self.p_energy_two)
            .chain(&self.p_in_coverage);
        for &p in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        for (name, s) in [
            ("scale_utility", self.scale_utility),
            ("scale_channel", self.scale_channel),
            ("scale_energy", self.scale_energy),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} must be a nonnegative real"));
            }
        }
        Ok(())
    }

    /// Sets q_l for every worker.
    pub fn with_coverage_probability(mut self, q: f64) -> Self {
        self.p_in_coverage = vec![q; self.num_workers];
        self
    }

    /// Sets p_l for every worker.
    pub fn with_energy_probability(mut self, p: f64) -> Self {
        self.p_energy_two = vec![p; self.num_workers];
        self
    }

    /// Resizes the worker population. Shrinking keeps the first workers;
    /// growing extends the recharge weights along their last increment and
    /// repeats the last per-worker probabilities.
    pub fn with_num_workers(mut self, num_workers: usize) -> Self {
        fn resize(v: &mut Vec<f64>, n: usize, extend: impl Fn(&[f64]) -> f64) {
            while v.len() > n {
                v.pop();
            }
            while v.len() < n {
                let next = extend(v);
                v.push(next);
            }
        }
        resize(&mut self.recharge_weight, num_workers, |v| match v {
            [] => 0.1,
            [x] => *x,
            [.., a, b] => b + (b - a),
        });
        resize(&mut self.p_energy_two, num_workers, |v| {
            v.last().copied().unwrap_or(0.5)
        });
        resize(&mut self.p_in_coverage, num_workers, |v| {
            v.last().copied().unwrap_or(0.8)
        });
        self.num_workers = num_workers;
        self
    }

    /// Applies a named sweep parameter. Known names: `q_mo`, `p_en`, `p_su`,
    /// `num_workers` (alias `L`).
    pub fn with_parameter(self, name: &str, value: f64) -> Result<Self> {
        let config = match name {
            "q_mo" => self.with_coverage_probability(value),
            "p_en" => self.with_energy_probability(value),
            "p_su" => EnvConfig {
                p_success_default: value,
                ..self
            },
            "num_workers" | "L" => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "num_workers must be a positive integer, got {value}"
                    )));
                }
                self.with_num_workers(value as usize)
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown sweep parameter `{other}`"
                )))
            }
        };
        config.validate()?;
        Ok(config)
    }

    /// Upper bound of a single step reward: α_ℐ.
    pub fn reward_upper_bound(&self) -> f64 {
        self.scale_utility
    }

    /// Lower bound of a single step reward: −(α_c + α_e).
    pub fn reward_lower_bound(&self) -> f64 {
        -(self.scale_channel + self.scale_energy)
    }
}
