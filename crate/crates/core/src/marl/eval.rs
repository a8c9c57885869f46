use super::{act, normalize_obs, stream_rng, AgentNets, MarlError, Stream, OBS_DIM};
use crate::env::{EnvError, EvNetwork, EvProfile, EpisodeTrace, Observation, Scenario};
use crate::metrics::{self, episode_costs, EpisodeCosts, EvalReport};

/// Outcome of one noise-free evaluation day.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub trace: EpisodeTrace,
    pub costs: EpisodeCosts,
    /// Full-day PAR; NaN when nothing was drawn.
    pub par: f64,
    /// PAR over `[earliest arrival, latest departure)`; NaN when nothing was drawn there.
    pub par_charging_phase: f64,
    pub satisfaction_rate: f64,
    pub all_satisfied: bool,
}

/// Noise-free action of every agent, each computed from that agent's own
/// observation and profile only.
pub fn decentralized_actions(
    agents: &[AgentNets],
    observations: &[Observation],
    profiles: &[EvProfile],
    horizon: usize,
    price_ref: f64,
) -> Result<Vec<f64>, MarlError> {
    if agents.len() != observations.len() || agents.len() != profiles.len() {
        return Err(MarlError::Dimension(format!(
            "{} agents, {} observations, {} profiles",
            agents.len(),
            observations.len(),
            profiles.len()
        )));
    }
    agents
        .iter()
        .zip(observations)
        .zip(profiles)
        .map(|((agent, o), p)| policy_action(agent, o, p, horizon, price_ref))
        .collect()
}

/// Noise-free action of one agent from its own observation and profile.
pub fn policy_action(
    agent: &AgentNets,
    obs: &Observation,
    profile: &EvProfile,
    horizon: usize,
    price_ref: f64,
) -> Result<f64, MarlError> {
    let x = normalize_obs(obs, profile, horizon, price_ref);
    // Zero noise never touches the generator.
    act(agent, &x, 0.0, profile.max_rate, &mut rand::rngs::mock::StepRng::new(0, 0))
}

/// Rolls the agents out noise-free on one fixed network.
pub fn evaluate_on(
    agents: &[AgentNets],
    network: &EvNetwork,
    price_ref: f64,
    tol: f64,
) -> Result<EpisodeResult, MarlError> {
    check_agents(agents, network.agents())?;
    let profiles = network.profiles();
    let horizon = network.horizon();
    // The rollout hands agent i nothing but its own observation.
    let trace = network.rollout(|i, o| {
        policy_action(&agents[i], o, &profiles[i], horizon, price_ref).map_err(|e| EnvError::Contract(e.to_string()))
    })?;
    let costs = episode_costs(&trace, network.prices(), network.dt())?;
    let demand = trace.demand_series();
    let start = profiles.iter().map(|p| p.arrival_hour).min().unwrap_or(0);
    let end = profiles.iter().map(|p| p.departure_hour).max().unwrap_or(horizon).min(demand.len());
    let window = if start < end { &demand[start..end] } else { &demand[..0] };
    let finals = &trace.final_state.batteries;
    let satisfaction_rate = metrics::satisfaction(finals, profiles, tol);
    let all_satisfied = finals.iter().zip(profiles).all(|(&b, p)| metrics::is_satisfied(b, p, tol));
    Ok(EpisodeResult {
        par: par_or_nan(demand),
        par_charging_phase: par_or_nan(window),
        satisfaction_rate,
        all_satisfied,
        costs,
        trace,
    })
}

fn par_or_nan(series: &[f64]) -> f64 {
    metrics::par(series).unwrap_or(f64::NAN)
}

fn check_agents(agents: &[AgentNets], n: usize) -> Result<(), MarlError> {
    if agents.len() != n {
        return Err(MarlError::Dimension(format!("{} agent networks for {n} agents", agents.len())));
    }
    if let Some(a) = agents.iter().find(|a| a.actor.input_dim() != OBS_DIM || a.actor.output_dim() != 1) {
        return Err(MarlError::Dimension(format!(
            "actor maps {} inputs to {} outputs",
            a.actor.input_dim(),
            a.actor.output_dim()
        )));
    }
    Ok(())
}

/// Noise-free evaluation over `episodes` days. Behavior samples come from
/// the evaluation stream of `seed`, so every policy evaluated with the same
/// seed faces the same owners.
pub fn evaluate(
    agents: &[AgentNets],
    scenario: &Scenario,
    episodes: usize,
    seed: u64,
    tol: f64,
) -> Result<EvalReport, MarlError> {
    Ok(summarize(&evaluate_episodes(agents, scenario, episodes, seed, tol)?, scenario.horizon))
}

/// Per-episode results behind [`evaluate`].
pub fn evaluate_episodes(
    agents: &[AgentNets],
    scenario: &Scenario,
    episodes: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<EpisodeResult>, MarlError> {
    scenario.validate()?;
    if episodes == 0 {
        return Err(MarlError::Config("evaluation needs at least one episode".into()));
    }
    check_agents(agents, scenario.agents)?;
    let price_ref = scenario.reference_price()?;
    let mut rng = stream_rng(seed, Stream::Evaluation);
    (0..episodes)
        .map(|ep| {
            let profiles = scenario.episode_profiles(&mut rng).map_err(|e| MarlError::from(e).at(ep, 0))?;
            let net = scenario.network(profiles).map_err(|e| MarlError::from(e).at(ep, 0))?;
            evaluate_on(agents, &net, price_ref, tol).map_err(|e| e.at(ep, 0))
        })
        .collect()
}

/// Averages episode results into a report. PAR means skip undefined
/// episodes and are NaN only when every episode is undefined.
pub fn summarize(results: &[EpisodeResult], horizon: usize) -> EvalReport {
    let k = results.len().max(1) as f64;
    let n = results.first().map_or(0, |r| r.costs.per_agent.len());
    let defined_mean = |f: fn(&EpisodeResult) -> f64| {
        let vals: Vec<f64> = results.iter().map(f).filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            metrics::mean(&vals)
        }
    };
    let mut per_agent_cost = vec![0.0; n];
    let mut price = vec![0.0; horizon];
    let mut demand = vec![0.0; horizon];
    for r in results {
        for (acc, c) in per_agent_cost.iter_mut().zip(&r.costs.per_agent) {
            *acc += c / k;
        }
        for (h, (d, p)) in r.trace.demand_series().iter().zip(r.trace.price_series()).enumerate().take(horizon) {
            demand[h] += d / k;
            price[h] += p / k;
        }
    }
    EvalReport {
        episodes: results.len(),
        par: defined_mean(|r| r.par),
        par_charging_phase: defined_mean(|r| r.par_charging_phase),
        total_network_cost: results.iter().map(|r| r.costs.network_cost).sum::<f64>() / k,
        per_agent_cost,
        satisfaction_rate: results.iter().map(|r| r.satisfaction_rate).sum::<f64>() / k,
        all_satisfied_rate: results.iter().filter(|r| r.all_satisfied).count() as f64 / k,
        mean_price_by_hour: price,
        mean_demand_by_hour: demand,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marl::{init_agents, TrainConfig};

    #[test]
    fn untrained_agents_give_finite_report() {
        let s = Scenario::default();
        let agents = init_agents(&s, &TrainConfig::default()).unwrap();
        let r = evaluate(&agents, &s, 3, 9, 0.05).unwrap();
        assert_eq!(r.episodes, 3);
        assert!(r.par.is_finite() && r.par >= 1.0);
        assert!(r.par_charging_phase.is_finite());
        assert!(r.total_network_cost.is_finite());
        assert!(r.per_agent_cost.iter().all(|c| c.is_finite()));
        assert_eq!(r.mean_demand_by_hour.len(), 24);
        let billed: f64 = r.per_agent_cost.iter().sum();
        assert!((billed - r.total_network_cost).abs() <= 1e-9 * r.total_network_cost);
        assert_eq!(r, evaluate(&agents, &s, 3, 9, 0.05).unwrap());
    }

    #[test]
    fn agent_count_mismatch() {
        let s = Scenario::default();
        let agents = init_agents(&Scenario { agents: 2, ..s.clone() }, &TrainConfig::default()).unwrap();
        assert!(matches!(evaluate(&agents, &s, 1, 0, 0.05), Err(MarlError::Dimension(_))));
    }

    #[test]
    fn actions_ignore_other_agents() {
        let s = Scenario::default();
        let agents = init_agents(&s, &TrainConfig::default()).unwrap();
        let profiles = s.episode_profiles(&mut stream_rng(1, Stream::Behavior)).unwrap();
        let net = s.network(profiles.clone()).unwrap();
        let (_, obs) = net.reset();
        let price_ref = s.reference_price().unwrap();
        let base = decentralized_actions(&agents, &obs, &profiles, 24, price_ref).unwrap();
        let mut other = obs.clone();
        other[1].battery_gap += 17.0;
        other[2].plugged = !other[2].plugged;
        let mut other_profiles = profiles.clone();
        other_profiles[2].expected_battery *= 0.5;
        let moved = decentralized_actions(&agents, &other, &other_profiles, 24, price_ref).unwrap();
        assert_eq!(base[0], moved[0]);
    }

    #[test]
    fn zero_episodes_rejected() {
        let s = Scenario::default();
        let agents = init_agents(&s, &TrainConfig::default()).unwrap();
        assert!(evaluate(&agents, &s, 0, 0, 0.05).is_err());
    }
}
