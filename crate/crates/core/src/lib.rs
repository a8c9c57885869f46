//! EV charging network simulation and multi-agent DDPG training.

pub mod env;
pub mod marl;
pub mod metrics;
pub mod nn;
pub mod oracle;
