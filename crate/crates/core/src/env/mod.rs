//! Discrete-time simulation of EVs sharing one energy source.
//!
//! Each hour every plugged car picks a charging rate; the total load sets a
//! quadratic price that is broadcast back to all owners, and each owner is
//! billed in proportion to its share of the load.

mod network;
mod pricing;
mod profile;
mod reward;
mod scenario;
mod topology;

use thiserror::Error;

pub use network::{EnvState, EpisodeTrace, EvNetwork, Observation, StepOutcome, TraceRecord};
pub use pricing::{PriceCoefficients, PriceModel};
pub use profile::{sample_profiles, BehaviorTable, EvProfile, FieldDistribution, PhysicalParams};
pub use reward::{battery_update, RewardConfig};
pub use scenario::{HourlyPrice, PriceConfig, Scenario};
pub use topology::Topology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("invalid behavior distribution: {0}")]
    Distribution(String),
    #[error("invalid price model: {0}")]
    Price(String),
    #[error("load must be finite and non-negative (got {0})")]
    NegativeLoad(f64),
    #[error("hour {hour} outside horizon {horizon}")]
    HourOutOfRange { hour: usize, horizon: usize },
    #[error("expected {expected} agents, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("agent {agent}: action {action} outside [0, {max}]")]
    ActionOutOfRange { agent: usize, action: f64, max: f64 },
    #[error("episode already finished at hour {hour}")]
    EpisodeOver { hour: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}
