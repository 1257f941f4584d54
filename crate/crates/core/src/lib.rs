//! Simulator and solvers for joint channel selection and energy recharge in
//! a mobility-aware federated-learning network.
//!
//! A model owner serves `L` workers. Each step it picks, per worker, a
//! channel (none, the free default channel or a paid special channel) and a
//! number of energy units to buy from a power beacon. The environment
//! ([`env`]) rewards successful transmissions and charges channel and energy
//! costs. Policies come from tabular Q-learning ([`tabular`]), double deep
//! Q-learning ([`ddqn`]) built on a small dense network ([`neural`]), fixed
//! baselines ([`policy`]) or exact value iteration ([`mdp`]). [`experiment`]
//! ties them together into reproducible CSV-producing runs.

pub mod config;
pub mod ddqn;
pub mod env;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod neural;
pub mod policy;
pub mod replay;
pub mod space;
pub mod tabular;
pub mod training;

pub use config::EnvConfig;
pub use ddqn::{ddqn_target, run_training, DdqnAgent, TrainerConfig};
pub use env::{step, Env, RewardTerms, SimRng, StepOutcome};
pub use error::{Error, Result};
pub use mdp::{build_exact_mdp, value_iteration, ExactMdp, ValueIterationResult};
pub use neural::{AdamState, Gradients, Mlp};
pub use policy::{DqnPolicy, GreedyPolicy, Policy, RandomPolicy, TablePolicy};
pub use replay::{ReplayMemory, Transition};
pub use space::{
    action_space_size, decode_action, decode_state, encode_action, encode_state, state_space_size, JointAction,
    NetworkState, WorkerAction, WorkerState,
};
pub use tabular::{train_q_learning, LearningRate, QLearningConfig, QTable};
pub use training::{EpsilonSchedule, TrainingRecord};
pub use experiment::{
    evaluate_policy, reward_ordering_report, run_experiment, smooth, AgentKind, ExperimentSpec, MetricsRecord,
    OrderingReport, PolicyHistogram, SummaryRow,
};
