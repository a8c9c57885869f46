use super::{
    act, critic_input_dim, critic_targets, normalize_obs, soft_update_targets, stream_rng, target_actions,
    update_actor, update_critic, AgentNets, Algo, MarlError, ReplayBuffer, Stream, TrainConfig, Transition,
    OBS_DIM,
};
use crate::env::{EvProfile, Observation, Scenario};
use crate::metrics::{self, format_number, CsvRecord};

/// Summary of one training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub algo: Algo,
    pub seed: u64,
    /// Episode return averaged over agents (unscaled rewards).
    pub mean_reward: f64,
    pub network_cost: f64,
    /// Full-day peak-to-average ratio; NaN when nobody charged.
    pub par: f64,
    pub satisfaction_rate: f64,
    pub noise_std: f64,
}

impl CsvRecord for EpisodeLog {
    fn header() -> &'static [&'static str] {
        &["episode", "algo", "seed", "mean_reward", "network_cost", "par", "satisfaction_rate", "noise_std"]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.episode.to_string(),
            self.algo.to_string(),
            self.seed.to_string(),
            format_number(self.mean_reward),
            format_number(self.network_cost),
            format_number(self.par),
            format_number(self.satisfaction_rate),
            format_number(self.noise_std),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Vec<AgentNets>,
    pub logs: Vec<EpisodeLog>,
}

/// Seeded initial networks for every agent.
pub fn init_agents(scenario: &Scenario, cfg: &TrainConfig) -> Result<Vec<AgentNets>, MarlError> {
    let mut rng = stream_rng(cfg.seed, Stream::Init);
    let dim = critic_input_dim(cfg.algo, scenario.agents);
    (0..scenario.agents).map(|_| AgentNets::new(dim, cfg, &mut rng)).collect()
}

/// Trains freshly initialized agents for `cfg.episodes` days.
pub fn train(scenario: &Scenario, cfg: &TrainConfig) -> Result<TrainOutcome, MarlError> {
    let agents = init_agents(scenario, cfg)?;
    train_from(scenario, cfg, agents, |_| {})
}

/// Training loop. Every hour each agent acts on its own normalized
/// observation; the joint transition is stored, and once the buffer holds a
/// batch, each update round refreshes every agent's critic, actor and
/// targets. `on_episode` sees each log as it is produced.
pub fn train_from<F>(
    scenario: &Scenario,
    cfg: &TrainConfig,
    mut agents: Vec<AgentNets>,
    mut on_episode: F,
) -> Result<TrainOutcome, MarlError>
where
    F: FnMut(&EpisodeLog),
{
    scenario.validate()?;
    cfg.validate()?;
    let n = scenario.agents;
    if agents.len() != n {
        return Err(MarlError::Dimension(format!("{} agent networks for {n} agents", agents.len())));
    }
    for a in &agents {
        a.check_dims(cfg.algo, n)?;
    }

    let mut behavior_rng = stream_rng(cfg.seed, Stream::Behavior);
    let mut noise_rng = stream_rng(cfg.seed, Stream::Noise);
    let mut replay_rng = stream_rng(cfg.seed, Stream::Replay);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let price_ref = scenario.reference_price()?;
    let horizon = scenario.horizon;
    let mut logs = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let noise = cfg.noise_std(episode);
        let profiles = scenario.episode_profiles(&mut behavior_rng).map_err(|e| MarlError::from(e).at(episode, 0))?;
        let net = scenario.network(profiles.clone()).map_err(|e| MarlError::from(e).at(episode, 0))?;
        let (mut state, raw) = net.reset();
        let mut obs = normalize_all(&raw, &profiles, horizon, price_ref);
        let mut returns = vec![0.0; n];

        loop {
            let hour = state.hour;
            let ctx = |e: MarlError| e.at(episode, hour);
            let mut actions_kw = Vec::with_capacity(n);
            for (i, agent) in agents.iter().enumerate() {
                actions_kw.push(act(agent, &obs[i], noise, profiles[i].max_rate, &mut noise_rng).map_err(ctx)?);
            }
            let out = net.step(&state, &actions_kw).map_err(|e| ctx(e.into()))?;
            let next_obs = normalize_all(&out.observations, &profiles, horizon, price_ref);
            for (ret, r) in returns.iter_mut().zip(&out.rewards) {
                *ret += r;
            }
            buffer
                .store(Transition {
                    joint_obs: obs,
                    joint_action: actions_kw.iter().zip(&profiles).map(|(a, p)| a / p.max_rate).collect(),
                    rewards: out.rewards.iter().map(|r| r * cfg.reward_scale).collect(),
                    joint_next_obs: next_obs.clone(),
                    done: out.done,
                })
                .map_err(ctx)?;

            if buffer.len() >= cfg.batch_size {
                for _ in 0..cfg.updates_per_step {
                    update_round(&mut agents, &buffer, cfg, &mut replay_rng).map_err(ctx)?;
                }
            }

            state = out.state;
            obs = next_obs;
            if out.done {
                break;
            }
        }

        let costs_net = net.prices();
        let mut network_cost = 0.0;
        for (h, &l) in state.demand_history.iter().enumerate() {
            network_cost += costs_net.network_cost(l, h, net.dt()).map_err(|e| MarlError::from(e).at(episode, h))?;
        }
        let log = EpisodeLog {
            episode,
            algo: cfg.algo,
            seed: cfg.seed,
            mean_reward: returns.iter().sum::<f64>() / n as f64,
            network_cost,
            par: metrics::par(&state.demand_history).unwrap_or(f64::NAN),
            satisfaction_rate: metrics::satisfaction(&state.batteries, &profiles, cfg.satisfaction_tol),
            noise_std: noise,
        };
        on_episode(&log);
        logs.push(log);
    }
    Ok(TrainOutcome { agents, logs })
}

fn normalize_all(raw: &[Observation], profiles: &[EvProfile], horizon: usize, price_ref: f64) -> Vec<[f64; OBS_DIM]> {
    raw.iter().zip(profiles).map(|(o, p)| normalize_obs(o, p, horizon, price_ref)).collect()
}

/// One shared batch; target actions come from the target actors as they
/// stood at the start of the round.
fn update_round(
    agents: &mut [AgentNets],
    buffer: &ReplayBuffer,
    cfg: &TrainConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(), MarlError> {
    let batch = buffer.sample_batch(rng, cfg.batch_size)?;
    let next_actions = target_actions(agents, &batch)?;
    for (i, agent) in agents.iter_mut().enumerate() {
        let y = critic_targets(agent, i, &batch, next_actions.view(), cfg.gamma, cfg.algo)?;
        update_critic(agent, i, &batch, &y, cfg.algo)?;
        update_actor(agent, i, &batch, cfg.algo)?;
        soft_update_targets(agent, cfg.tau)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (Scenario, TrainConfig) {
        let scenario = Scenario { agents: 2, fixed_behavior: true, ..Default::default() };
        let cfg = TrainConfig {
            episodes: 3,
            batch_size: 16,
            actor_hidden: vec![8],
            critic_hidden: vec![8],
            ..Default::default()
        };
        (scenario, cfg)
    }

    #[test]
    fn zero_episodes_keep_initialization() {
        let (s, mut cfg) = small();
        cfg.episodes = 0;
        let out = train(&s, &cfg).unwrap();
        assert!(out.logs.is_empty());
        assert_eq!(out.agents, init_agents(&s, &cfg).unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let (s, cfg) = small();
        let a = train(&s, &cfg).unwrap();
        let b = train(&s, &cfg).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.agents, b.agents);
        assert_eq!(a.logs.len(), 3);
        assert_ne!(a.agents, init_agents(&s, &cfg).unwrap());
    }

    #[test]
    fn wrong_agent_count_rejected() {
        let (s, cfg) = small();
        let mut agents = init_agents(&s, &cfg).unwrap();
        agents.pop();
        assert!(matches!(train_from(&s, &cfg, agents, |_| {}), Err(MarlError::Dimension(_))));
    }
}
