//! Multi-agent DDPG: replay buffer, per-agent actor/critic updates, the
//! centralized-critic trainer (CTDE) and the independent-learner baseline.

mod agent;
mod buffer;
mod eval;
mod trainer;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::metrics::MetricsError;
use crate::nn::NnError;

pub use agent::{
    act, actor_objective_gradient, critic_input, critic_input_dim, critic_target_value, critic_targets,
    normalize_obs, soft_update_targets, target_actions, update_actor, update_critic, AgentNets,
};
pub use buffer::{Batch, ReplayBuffer, Transition};
pub use eval::{
    decentralized_actions, evaluate, evaluate_episodes, evaluate_on, policy_action, summarize, EpisodeResult,
};
pub use trainer::{init_agents, train, train_from, EpisodeLog, TrainOutcome};

/// Width of one agent's observation vector.
pub const OBS_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// Centralized critics over all agents' observations and actions.
    Ctde,
    /// Independent DDPG: each critic sees only its own agent.
    Iddpg,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Ctde => "ctde",
            Algo::Iddpg => "iddpg",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ctde" => Ok(Algo::Ctde),
            "iddpg" => Ok(Algo::Iddpg),
            other => Err(format!("unknown algorithm `{other}` (expected ctde or iddpg)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algo: Algo,
    pub seed: u64,
    pub episodes: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub updates_per_step: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub noise_std_initial: f64,
    pub noise_std_final: f64,
    /// Episodes over which exploration noise decays linearly; 70% of
    /// `episodes` when unset.
    pub noise_decay_episodes: Option<usize>,
    /// Multiplies rewards before they enter the replay buffer, keeping
    /// critic targets near unit scale. Logs report unscaled rewards.
    pub reward_scale: f64,
    /// Relative battery tolerance for counting an owner as satisfied.
    pub satisfaction_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ctde,
            seed: 0,
            episodes: 2000,
            gamma: 0.95,
            tau: 0.01,
            batch_size: 64,
            buffer_capacity: 100_000,
            updates_per_step: 1,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![128, 128],
            noise_std_initial: 0.3,
            noise_std_final: 0.02,
            noise_decay_episodes: None,
            reward_scale: 0.01,
            satisfaction_tol: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: &str| Err(MarlError::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad("batch_size must be positive and at most buffer_capacity");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.noise_std_initial >= 0.0 && self.noise_std_final >= 0.0) {
            return bad("noise standard deviations must be non-negative");
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if !(self.satisfaction_tol >= 0.0) {
            return bad("satisfaction_tol must be non-negative");
        }
        Ok(())
    }

    pub fn noise_decay_episodes(&self) -> usize {
        self.noise_decay_episodes
            .unwrap_or_else(|| (self.episodes as f64 * 0.7).ceil() as usize)
    }

    /// Exploration noise (fraction of the max rate) used in `episode`.
    pub fn noise_std(&self, episode: usize) -> f64 {
        let decay = self.noise_decay_episodes();
        let frac = if decay == 0 { 1.0 } else { (episode as f64 / decay as f64).min(1.0) };
        self.noise_std_initial * (1.0 - frac) + self.noise_std_final * frac
    }
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stream {
    Init = 0,
    Behavior = 1,
    Noise = 2,
    Replay = 3,
    Evaluation = 4,
}

pub(crate) fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarlError {
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("replay buffer: {0}")]
    Buffer(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("episode {episode}, hour {hour}: {source}")]
    At {
        episode: usize,
        hour: usize,
        #[source]
        source: Box<MarlError>,
    },
}

impl MarlError {
    pub(crate) fn at(self, episode: usize, hour: usize) -> Self {
        MarlError::At { episode, hour, source: Box::new(self) }
    }
}
