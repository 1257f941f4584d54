//! The common acting interface plus the non-learning reference policies.

use rand::Rng;

use crate::config::EnvConfig;
use crate::ddqn::DdqnAgent;
use crate::env::{seeded_rng, SimRng};
use crate::error::Result;
use crate::replay::Transition;
use crate::space::{decode_action, encode_state, JointAction, NetworkState, WorkerAction};
use crate::tabular::QTable;

pub trait Policy {
    fn act(&mut self, state: &NetworkState) -> Result<JointAction>;

    fn observe(&mut self, _transition: &Transition) {}
}

/// Best special channel and a full recharge for every worker, whatever the
/// state.
pub fn greedy_policy_act(_state: &NetworkState, config: &EnvConfig) -> JointAction {
    JointAction::uniform(config.num_workers, config.num_channels, config.max_energy)
}

/// Independent uniform channel in `0..=N` and recharge in `0..=e_max` per
/// worker.
pub fn random_policy_act<R: Rng + ?Sized>(_state: &NetworkState, rng: &mut R, config: &EnvConfig) -> JointAction {
    let workers = (0..config.num_workers)
        .map(|_| WorkerAction {
            channel: rng.gen_range(0..=config.num_channels),
            recharge: rng.gen_range(0..=config.max_energy),
        })
        .collect();
    JointAction::new(workers)
}

#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    config: EnvConfig,
}

impl GreedyPolicy {
    pub fn new(config: &EnvConfig) -> Self {
        GreedyPolicy {
            config: config.clone(),
        }
    }
}

impl Policy for GreedyPolicy {
    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        Ok(greedy_policy_act(state, &self.config))
    }
}

#[derive(Debug, Clone)]
pub struct RandomPolicy {
    config: EnvConfig,
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(config: &EnvConfig, seed: u64) -> Self {
        RandomPolicy {
            config: config.clone(),
            rng: seeded_rng(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        Ok(random_policy_act(state, &mut self.rng, &self.config))
    }
}

/// Looks the action up in a per-state table of encoded actions.
#[derive(Debug, Clone)]
pub struct TablePolicy {
    config: EnvConfig,
    actions: Vec<usize>,
}

impl TablePolicy {
    pub fn new(config: &EnvConfig, actions: Vec<usize>) -> Self {
        TablePolicy {
            config: config.clone(),
            actions,
        }
    }

    /// Greedy with respect to a Q-table.
    pub fn from_q_table(config: &EnvConfig, table: &QTable) -> Self {
        Self::new(config, table.greedy_policy())
    }
}

impl Policy for TablePolicy {
    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        let s = encode_state(state, &self.config)? as usize;
        decode_action(self.actions[s] as u64, &self.config)
    }
}

/// Greedy with respect to a trained network (ε = 0).
#[derive(Debug)]
pub struct DqnPolicy {
    agent: DdqnAgent,
}

impl DqnPolicy {
    pub fn new(agent: DdqnAgent) -> Self {
        DqnPolicy { agent }
    }

    pub fn agent(&self) -> &DdqnAgent {
        &self.agent
    }
}

impl Policy for DqnPolicy {
    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        let a = self.agent.greedy_action(state)?;
        decode_action(a as u64, self.agent.env_config())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{decode_state, state_space_size};

    #[test]
    fn greedy_uses_best_channel_and_full_recharge() {
        let c = EnvConfig::table_one();
        let mut p = GreedyPolicy::new(&c);
        let mut rng = seeded_rng(0);
        let first = p.act(&decode_state(0, &c).unwrap()).unwrap();
        assert_eq!(first, JointAction::uniform(3, 3, 3));
        for _ in 0..100 {
            let s = decode_state(rng.gen_range(0..state_space_size(&c)), &c).unwrap();
            assert_eq!(p.act(&s).unwrap(), first);
        }
    }

    #[test]
    fn greedy_with_two_channels() {
        let mut c = EnvConfig::table_one();
        c.num_channels = 2;
        c.channel_cost = vec![2.0];
        c.p_success_special = vec![0.95];
        let a = greedy_policy_act(&decode_state(5, &c).unwrap(), &c);
        assert!(a.workers.iter().all(|w| w.channel == 2));
    }

    #[test]
    fn random_marginals_are_uniform() {
        // Chi-squared against uniform over the four channels, 3 dof; the
        // 0.999 quantile is 16.27.
        let c = EnvConfig::table_one().with_num_workers(1);
        let s = decode_state(0, &c).unwrap();
        let mut p = RandomPolicy::new(&c, 11);
        let n = 100_000;
        let mut channel = [0f64; 4];
        let mut recharge = [0f64; 4];
        for _ in 0..n {
            let a = p.act(&s).unwrap().workers[0];
            channel[a.channel] += 1.0;
            recharge[a.recharge] += 1.0;
        }
        let expected = n as f64 / 4.0;
        for counts in [channel, recharge] {
            let chi2: f64 = counts.iter().map(|o| (o - expected).powi(2) / expected).sum();
            assert!(chi2 < 16.27, "chi2 {chi2}");
        }
    }

    #[test]
    fn random_is_reproducible() {
        let c = EnvConfig::table_one();
        let s = decode_state(0, &c).unwrap();
        let run = |seed| {
            let mut p = RandomPolicy::new(&c, seed);
            (0..50).map(|_| p.act(&s).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn degenerate_action_space() {
        let mut c = EnvConfig::table_one().with_num_workers(1);
        c.num_channels = 0;
        c.max_energy = 0;
        let s = NetworkState::new(vec![Default::default()]);
        let mut rng = seeded_rng(0);
        for _ in 0..20 {
            assert_eq!(random_policy_act(&s, &mut rng, &c), JointAction::uniform(1, 0, 0));
        }
    }

    #[test]
    fn table_policy_follows_q_table() {
        let c = EnvConfig::table_one().with_num_workers(1);
        let mut t = QTable::for_config(&c, 0.1, 0.9).unwrap();
        t.set(5, 14, 1.0);
        let mut p = TablePolicy::from_q_table(&c, &t);
        let a = p.act(&decode_state(5, &c).unwrap()).unwrap();
        assert_eq!(a.workers[0], WorkerAction { channel: 2, recharge: 3 });
        let a = p.act(&decode_state(4, &c).unwrap()).unwrap();
        assert_eq!(a.workers[0], WorkerAction { channel: 0, recharge: 0 });
    }
}
