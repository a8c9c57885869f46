use serde::{Deserialize, Serialize};

use super::{battery_update, EnvError, EvProfile, PriceModel, RewardConfig, Topology};

/// Full simulation state at the start of `hour`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub hour: usize,
    /// kWh per agent.
    pub batteries: Vec<f64>,
    pub plugged: Vec<bool>,
    /// Total network demand (kW) for every completed hour.
    pub demand_history: Vec<f64>,
    /// Price broadcast for the most recent hour (the zero-load price before the first step).
    pub last_price: f64,
}

/// What one agent sees locally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// kWh still missing: expected minus current battery.
    pub battery_gap: f64,
    /// Hours since arrival (negative before arrival).
    pub elapsed: f64,
    /// Shared network price.
    pub price: f64,
    pub plugged: bool,
    pub departure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub done: bool,
    /// Actions after masking unplugged agents (kW).
    pub effective_actions: Vec<f64>,
    pub total_demand: f64,
    pub price: f64,
}

/// One row of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub hour: usize,
    pub agent_id: usize,
    pub action_kw: f64,
    pub battery_kwh: f64,
    pub price: f64,
    pub reward: f64,
    pub total_demand_kw: f64,
}

/// Per-hour, per-agent record of one simulated day plus the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub records: Vec<TraceRecord>,
    pub final_state: EnvState,
    pub agents: usize,
}

impl EpisodeTrace {
    pub fn demand_series(&self) -> &[f64] {
        &self.final_state.demand_history
    }

    /// `[agent][hour]` effective actions.
    pub fn action_matrix(&self) -> Vec<Vec<f64>> {
        let hours = self.final_state.hour;
        let mut m = vec![vec![0.0; hours]; self.agents];
        for r in &self.records {
            m[r.agent_id][r.hour] = r.action_kw;
        }
        m
    }

    pub fn total_reward(&self, agent: usize) -> f64 {
        self.records.iter().filter(|r| r.agent_id == agent).map(|r| r.reward).sum()
    }

    /// Prices broadcast during each hour.
    pub fn price_series(&self) -> Vec<f64> {
        let mut prices = vec![0.0; self.final_state.hour];
        for r in self.records.iter().filter(|r| r.agent_id == 0) {
            prices[r.hour] = r.price;
        }
        prices
    }
}

/// A shared-transformer EV network for one day: topology, owners and tariff.
///
/// `reset` and `step` are pure: they take a state and hand back a new one.
#[derive(Debug, Clone)]
pub struct EvNetwork {
    topology: Topology,
    profiles: Vec<EvProfile>,
    prices: PriceModel,
    reward: RewardConfig,
    horizon: usize,
    dt: f64,
}

impl EvNetwork {
    pub fn new(
        topology: Topology,
        profiles: Vec<EvProfile>,
        prices: PriceModel,
        reward: RewardConfig,
        horizon: usize,
        dt: f64,
    ) -> Result<Self, EnvError> {
        if profiles.len() != topology.node_count() {
            return Err(EnvError::AgentCount {
                expected: topology.node_count(),
                got: profiles.len(),
            });
        }
        if horizon == 0 || prices.horizon() < horizon {
            return Err(EnvError::Contract(format!(
                "horizon {horizon} must be positive and covered by the price model ({} hours)",
                prices.horizon()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EnvError::Contract(format!("time step must be positive (got {dt})")));
        }
        reward.validate()?;
        for p in &profiles {
            p.validate(horizon)?;
        }
        Ok(Self { topology, profiles, prices, reward, horizon, dt })
    }

    pub fn agents(&self) -> usize {
        self.profiles.len()
    }

    pub fn profiles(&self) -> &[EvProfile] {
        &self.profiles
    }

    pub fn prices(&self) -> &PriceModel {
        &self.prices
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn reset(&self) -> (EnvState, Vec<Observation>) {
        let state = EnvState {
            hour: 0,
            batteries: self.profiles.iter().map(|p| p.battery_at_arrival).collect(),
            plugged: self.profiles.iter().map(|p| p.is_plugged(0)).collect(),
            demand_history: Vec::with_capacity(self.horizon),
            // c_0 >= 0 and the load is zero, so this cannot fail.
            last_price: self.prices.price(0.0, 0).expect("validated price model"),
        };
        let obs = self.observations(&state);
        (state, obs)
    }

    pub fn observations(&self, state: &EnvState) -> Vec<Observation> {
        self.profiles
            .iter()
            .zip(&state.batteries)
            .zip(&state.plugged)
            .map(|((p, &b), &plugged)| Observation {
                battery_gap: p.expected_battery - b,
                elapsed: state.hour as f64 - p.arrival_hour as f64,
                price: state.last_price,
                plugged,
                departure: p.departure_hour as f64,
            })
            .collect()
    }

    /// Advances one hour. Unplugged agents are masked to zero demand; any
    /// action outside `[0, max_rate]` is rejected.
    pub fn step(&self, state: &EnvState, actions: &[f64]) -> Result<StepOutcome, EnvError> {
        let n = self.agents();
        if state.hour >= self.horizon {
            return Err(EnvError::EpisodeOver { hour: state.hour });
        }
        if actions.len() != n {
            return Err(EnvError::AgentCount { expected: n, got: actions.len() });
        }
        for (agent, (&a, p)) in actions.iter().zip(&self.profiles).enumerate() {
            if !(a >= 0.0 && a <= p.max_rate) {
                return Err(EnvError::ActionOutOfRange { agent, action: a, max: p.max_rate });
            }
        }

        let hour = state.hour;
        let effective: Vec<f64> = actions
            .iter()
            .zip(&state.plugged)
            .map(|(&a, &plugged)| if plugged { a } else { 0.0 })
            .collect();
        let total: f64 = effective.iter().sum();
        let price = self.prices.price(total, hour)?;

        let mut batteries = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for (i, p) in self.profiles.iter().enumerate() {
            let b = battery_update(state.batteries[i], effective[i], p.efficiency, self.dt, p.capacity);
            let r = if state.plugged[i] {
                let at_departure = hour + 1 == p.departure_hour;
                self.reward.reward(price, effective[i], b, p.expected_battery, at_departure)
            } else {
                0.0
            };
            batteries.push(b);
            rewards.push(r);
        }

        let next_hour = hour + 1;
        let mut demand_history = state.demand_history.clone();
        demand_history.push(total);
        let next = EnvState {
            hour: next_hour,
            batteries,
            plugged: self.profiles.iter().map(|p| p.is_plugged(next_hour)).collect(),
            demand_history,
            last_price: price,
        };
        let observations = self.observations(&next);
        Ok(StepOutcome {
            state: next,
            observations,
            rewards,
            done: next_hour == self.horizon,
            effective_actions: effective,
            total_demand: total,
            price,
        })
    }

    /// Runs one full day. `policy(agent, own_observation)` is the only way
    /// actions are produced, so each agent acts on its own observation alone.
    pub fn rollout<F>(&self, mut policy: F) -> Result<EpisodeTrace, EnvError>
    where
        F: FnMut(usize, &Observation) -> Result<f64, EnvError>,
    {
        let (mut state, mut obs) = self.reset();
        let mut records = Vec::with_capacity(self.horizon * self.agents());
        loop {
            let actions = obs
                .iter()
                .enumerate()
                .map(|(i, o)| policy(i, o))
                .collect::<Result<Vec<_>, _>>()?;
            let out = self.step(&state, &actions)?;
            for i in 0..self.agents() {
                records.push(TraceRecord {
                    hour: state.hour,
                    agent_id: i,
                    action_kw: out.effective_actions[i],
                    battery_kwh: out.state.batteries[i],
                    price: out.price,
                    reward: out.rewards[i],
                    total_demand_kw: out.total_demand,
                });
            }
            state = out.state;
            obs = out.observations;
            if out.done {
                break;
            }
        }
        Ok(EpisodeTrace { records, final_state: state, agents: self.agents() })
    }
}
