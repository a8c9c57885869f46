use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Algo, MarlError, TrainConfig, OBS_DIM};
use crate::env::{EvProfile, Observation};
use crate::marl::Batch;
use crate::nn::{apply_update, soft_update, Gradients, Mlp, OptimizerState, OutputActivation};

/// One agent's actor, critic, their target copies and optimizer states.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
}

impl AgentNets {
    pub fn new<R: Rng + ?Sized>(
        critic_input_dim: usize,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self, MarlError> {
        let mut actor_sizes = vec![OBS_DIM];
        actor_sizes.extend(&cfg.actor_hidden);
        actor_sizes.push(1);
        let mut critic_sizes = vec![critic_input_dim];
        critic_sizes.extend(&cfg.critic_hidden);
        critic_sizes.push(1);

        let actor = Mlp::new(&actor_sizes, OutputActivation::Sigmoid, rng)?;
        let critic = Mlp::new(&critic_sizes, OutputActivation::Identity, rng)?;
        Ok(Self::from_networks(actor, critic, cfg.lr_actor, cfg.lr_critic))
    }

    /// Wraps given networks; targets start as exact copies.
    pub fn from_networks(actor: Mlp, critic: Mlp, lr_actor: f64, lr_critic: f64) -> Self {
        Self {
            actor_opt: OptimizerState::new(&actor, lr_actor),
            critic_opt: OptimizerState::new(&critic, lr_critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn critic_input_dim(&self) -> usize {
        self.critic.input_dim()
    }

    /// Checks the network shapes this agent needs for `mode` with `agents` agents.
    pub fn check_dims(&self, mode: Algo, agents: usize) -> Result<(), MarlError> {
        let want = critic_input_dim(mode, agents);
        let ok = self.actor.input_dim() == OBS_DIM
            && self.actor.output_dim() == 1
            && self.critic.output_dim() == 1
            && self.critic.input_dim() == want
            && self.actor_target.same_shape(&self.actor)
            && self.critic_target.same_shape(&self.critic)
            && self.actor_opt.fits(&self.actor)
            && self.critic_opt.fits(&self.critic);
        if ok {
            Ok(())
        } else {
            Err(MarlError::Dimension(format!(
                "agent networks do not fit {mode} with {agents} agents (critic input {} vs {want})",
                self.critic.input_dim()
            )))
        }
    }
}

/// Critic input width: every agent's observation and action for CTDE, the
/// agent's own for independent learners.
pub fn critic_input_dim(mode: Algo, agents: usize) -> usize {
    match mode {
        Algo::Ctde => agents * (OBS_DIM + 1),
        Algo::Iddpg => OBS_DIM + 1,
    }
}

/// Column of agent `i`'s action inside its critic input.
fn action_column(mode: Algo, i: usize) -> usize {
    match mode {
        Algo::Ctde => i * (OBS_DIM + 1) + OBS_DIM,
        Algo::Iddpg => OBS_DIM,
    }
}

/// Scales a raw observation into `[0, 1]^5`: battery gap by capacity,
/// elapsed and departure hours by the horizon, price by `price_ref`, plug
/// flag as 0/1.
pub fn normalize_obs(raw: &Observation, profile: &EvProfile, horizon: usize, price_ref: f64) -> [f64; OBS_DIM] {
    let h = horizon as f64;
    // Negative gaps (overshoot) and negative elapsed time (before arrival)
    // are ordinary states and clamp quietly.
    let gap = (raw.battery_gap / profile.capacity).clamp(0.0, 1.0);
    if raw.battery_gap > profile.capacity {
        log::warn!("battery gap {} exceeds capacity {}", raw.battery_gap, profile.capacity);
    }
    let elapsed = (raw.elapsed / h).clamp(0.0, 1.0);
    let price = raw.price / price_ref;
    if !(0.0..=1.0).contains(&price) {
        log::warn!("price {} outside the normalization range [0, {price_ref}]", raw.price);
    }
    let departure = raw.departure / h;
    if !(0.0..=1.0).contains(&departure) {
        log::warn!("departure hour {} outside the horizon {horizon}", raw.departure);
    }
    [
        gap,
        elapsed,
        price.clamp(0.0, 1.0),
        if raw.plugged { 1.0 } else { 0.0 },
        departure.clamp(0.0, 1.0),
    ]
}

/// Charging rate in kW: the scaled actor output plus Gaussian exploration
/// noise with standard deviation `noise_std * a_max`, clamped to `[0, a_max]`.
pub fn act<R: Rng + ?Sized>(
    agent: &AgentNets,
    obs: &[f64; OBS_DIM],
    noise_std: f64,
    a_max: f64,
    rng: &mut R,
) -> Result<f64, MarlError> {
    let (out, _) = agent.actor.forward(obs)?;
    let u = out[0];
    if !u.is_finite() {
        return Err(MarlError::NonFinite("actor output".into()));
    }
    let mut a = a_max * u;
    if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std * a_max)
            .map_err(|e| MarlError::Config(format!("noise: {e}")))?;
        a += noise.sample(rng);
    }
    Ok(a.clamp(0.0, a_max))
}

/// Builds critic inputs `(B, D)` from per-agent observations and the
/// `(B, N)` action fractions.
pub fn critic_input(mode: Algo, i: usize, obs: &[Array2<f64>], actions: ArrayView2<f64>) -> Array2<f64> {
    let b = actions.nrows();
    match mode {
        Algo::Ctde => {
            let n = obs.len();
            let mut x = Array2::zeros((b, n * (OBS_DIM + 1)));
            for (j, o) in obs.iter().enumerate() {
                let c = j * (OBS_DIM + 1);
                x.slice_mut(s![.., c..c + OBS_DIM]).assign(o);
                x.column_mut(c + OBS_DIM).assign(&actions.column(j));
            }
            x
        }
        Algo::Iddpg => {
            let mut x = Array2::zeros((b, OBS_DIM + 1));
            x.slice_mut(s![.., ..OBS_DIM]).assign(&obs[i]);
            x.column_mut(OBS_DIM).assign(&actions.column(i));
            x
        }
    }
}

/// Bootstrapped critic target `r + gamma * (1 - done) * q_next`.
pub fn critic_target_value(reward: f64, done: bool, gamma: f64, q_next: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next
    }
}

/// Target-policy actions `mu'_j(o'_j)` for every agent, `(B, N)`.
pub fn target_actions(agents: &[AgentNets], batch: &Batch) -> Result<Array2<f64>, MarlError> {
    let mut out = Array2::zeros((batch.len(), agents.len()));
    for (j, agent) in agents.iter().enumerate() {
        let u = agent.actor_target.predict_batch(batch.next_obs[j].view())?;
        out.column_mut(j).assign(&u.column(0));
    }
    Ok(out)
}

/// Critic targets `y` for agent `i` over the batch.
pub fn critic_targets(
    agent: &AgentNets,
    i: usize,
    batch: &Batch,
    next_actions: ArrayView2<f64>,
    gamma: f64,
    mode: Algo,
) -> Result<Array1<f64>, MarlError> {
    let x = critic_input(mode, i, &batch.next_obs, next_actions);
    let q_next = agent.critic_target.predict_batch(x.view())?;
    Ok((0..batch.len())
        .map(|r| critic_target_value(batch.rewards[[r, i]], batch.done[r] > 0.5, gamma, q_next[[r, 0]]))
        .collect())
}

/// One critic step on the mean squared TD error. Returns the loss before
/// the step.
pub fn update_critic(
    agent: &mut AgentNets,
    i: usize,
    batch: &Batch,
    targets: &Array1<f64>,
    mode: Algo,
) -> Result<f64, MarlError> {
    let x = critic_input(mode, i, &batch.obs, batch.actions.view());
    let (q, cache) = agent.critic.forward_batch(x.view())?;
    let diff = &q.column(0) - targets;
    let b = batch.len() as f64;
    let loss = diff.mapv(|d| d * d).sum() / b;
    if !loss.is_finite() {
        return Err(MarlError::NonFinite(format!("critic loss of agent {i}")));
    }
    let grad_out = (diff * (2.0 / b)).insert_axis(Axis(1));
    let (grads, _) = agent.critic.backward(&cache, grad_out.view())?;
    apply_update(&mut agent.critic, &grads, &mut agent.critic_opt)?;
    Ok(loss)
}

/// Mean critic value with agent `i`'s action replaced by its current policy,
/// and the gradient of that mean with respect to the actor parameters.
///
/// In CTDE mode the other agents' actions come from the batch.
pub fn actor_objective_gradient(
    agent: &AgentNets,
    i: usize,
    batch: &Batch,
    mode: Algo,
) -> Result<(f64, Gradients), MarlError> {
    let (u, actor_cache) = agent.actor.forward_batch(batch.obs[i].view())?;
    let mut actions = batch.actions.clone();
    actions.column_mut(i).assign(&u.column(0));
    let x = critic_input(mode, i, &batch.obs, actions.view());
    let (q, critic_cache) = agent.critic.forward_batch(x.view())?;
    let b = batch.len() as f64;
    let objective = q.sum() / b;
    if !objective.is_finite() {
        return Err(MarlError::NonFinite(format!("actor objective of agent {i}")));
    }
    let (_, dq_dx) = agent.critic.backward(&critic_cache, Array2::from_elem((batch.len(), 1), 1.0 / b).view())?;
    let col = action_column(mode, i);
    let dq_du = dq_dx.slice(s![.., col..col + 1]).to_owned();
    let (grads, _) = agent.actor.backward(&actor_cache, dq_du.view())?;
    if !grads.is_finite() {
        return Err(MarlError::NonFinite(format!("actor gradient of agent {i}")));
    }
    Ok((objective, grads))
}

/// One ascent step on the policy objective. The critic is not modified.
pub fn update_actor(agent: &mut AgentNets, i: usize, batch: &Batch, mode: Algo) -> Result<f64, MarlError> {
    let (objective, mut grads) = actor_objective_gradient(agent, i, batch, mode)?;
    grads.scale(-1.0);
    apply_update(&mut agent.actor, &grads, &mut agent.actor_opt)?;
    Ok(objective)
}

pub fn soft_update_targets(agent: &mut AgentNets, tau: f64) -> Result<(), MarlError> {
    soft_update(&mut agent.actor_target, &agent.actor, tau)?;
    soft_update(&mut agent.critic_target, &agent.critic, tau)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marl::Transition;
    use crate::nn::Layer;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> TrainConfig {
        TrainConfig { actor_hidden: vec![8], critic_hidden: vec![8], ..Default::default() }
    }

    fn profile() -> EvProfile {
        EvProfile {
            arrival_hour: 9,
            departure_hour: 18,
            battery_at_arrival: 5.5,
            expected_battery: 55.0,
            capacity: 70.0,
            efficiency: 0.9,
            max_rate: 10.0,
        }
    }

    fn batch(n: usize, b: usize, seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ts: Vec<Transition> = (0..b)
            .map(|k| Transition {
                joint_obs: (0..n).map(|_| std::array::from_fn(|_| rng.gen::<f64>())).collect(),
                joint_action: (0..n).map(|_| rng.gen()).collect(),
                rewards: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                joint_next_obs: (0..n).map(|_| std::array::from_fn(|_| rng.gen::<f64>())).collect(),
                done: k % 3 == 0,
            })
            .collect();
        Batch::from_transitions(&ts.iter().collect::<Vec<_>>())
    }

    #[test]
    fn normalize_examples() {
        let p = profile();
        let raw = Observation { battery_gap: 0.0, elapsed: 3.0, price: 4.0, plugged: true, departure: 18.0 };
        let x = normalize_obs(&raw, &p, 24, 4.0);
        assert_eq!(x[0], 0.0);
        assert_eq!(x[1], 3.0 / 24.0);
        assert_eq!(x[2], 1.0);
        assert_eq!(x[3], 1.0);
        assert_eq!(x[4], 0.75);
        let early = Observation { battery_gap: 80.0, elapsed: -4.0, price: 9.0, plugged: false, departure: 18.0 };
        let x = normalize_obs(&early, &p, 24, 4.0);
        assert_eq!(x, [1.0, 0.0, 1.0, 0.0, 0.75]);
    }

    #[test]
    fn act_bounds_and_determinism() {
        let agent = AgentNets::new(6, &cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let obs = [0.5, 0.1, 0.3, 1.0, 0.75];
        let (u, _) = agent.actor.forward(&obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(act(&agent, &obs, 0.0, 10.0, &mut rng).unwrap(), 10.0 * u[0]);
        for _ in 0..200 {
            let a = act(&agent, &obs, 0.5, 10.0, &mut rng).unwrap();
            assert!((0.0..=10.0).contains(&a));
        }
        let a1 = act(&agent, &obs, 0.3, 10.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let a2 = act(&agent, &obs, 0.3, 10.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn critic_input_layouts() {
        let b = batch(3, 2, 4);
        let x = critic_input(Algo::Ctde, 1, &b.obs, b.actions.view());
        assert_eq!(x.dim(), (2, 18));
        assert_eq!(x[[1, 6]], b.obs[1][[1, 0]]);
        assert_eq!(x[[1, 11]], b.actions[[1, 1]]);
        let x = critic_input(Algo::Iddpg, 2, &b.obs, b.actions.view());
        assert_eq!(x.dim(), (2, 6));
        assert_eq!(x[[0, 5]], b.actions[[0, 2]]);
        assert_eq!(x[[0, 2]], b.obs[2][[0, 2]]);
    }

    #[test]
    fn target_value_examples() {
        assert_eq!(critic_target_value(1.5, true, 0.9, 100.0), 1.5);
        assert_relative_eq!(critic_target_value(1.0, false, 0.9, 2.0), 2.8);
        assert_eq!(critic_target_value(-3.0, false, 0.0, 7.0), -3.0);
    }

    fn constant_critic(dim: usize, value: f64) -> Mlp {
        Mlp::from_layers(
            vec![Layer { weights: Array2::zeros((dim, 1)), bias: array![value] }],
            OutputActivation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn critic_loss_scalar_toy() {
        let actor = Mlp::new(&[OBS_DIM, 1], OutputActivation::Sigmoid, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut agent = AgentNets::from_networks(actor, constant_critic(6, 3.0), 1e-3, 1e-3);
        let b = batch(1, 1, 0);
        let loss = update_critic(&mut agent, 0, &b, &array![2.8], Algo::Iddpg).unwrap();
        assert_relative_eq!(loss, 0.04, max_relative = 1e-12);
    }

    #[test]
    fn critic_at_target_has_zero_loss() {
        let actor = Mlp::new(&[OBS_DIM, 1], OutputActivation::Sigmoid, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut agent = AgentNets::from_networks(actor, constant_critic(12, 1.25), 1e-3, 1e-3);
        let before = agent.critic.clone();
        let b = batch(2, 8, 1);
        let loss = update_critic(&mut agent, 1, &b, &Array1::from_elem(8, 1.25), Algo::Ctde).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(agent.critic, before);
    }

    #[test]
    fn constant_critic_leaves_actor() {
        let actor = Mlp::new(&[OBS_DIM, 4, 1], OutputActivation::Sigmoid, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut agent = AgentNets::from_networks(actor, constant_critic(18, -2.0), 1e-3, 1e-3);
        let before = agent.actor.clone();
        let b = batch(3, 5, 2);
        let obj = update_actor(&mut agent, 0, &b, Algo::Ctde).unwrap();
        assert_eq!(obj, -2.0);
        assert_eq!(agent.actor, before);
    }

    #[test]
    fn updates_touch_only_their_network() {
        let mut agent = AgentNets::new(12, &cfg(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = batch(2, 16, 3);
        let critic = agent.critic.clone();
        update_actor(&mut agent, 1, &b, Algo::Ctde).unwrap();
        assert_eq!(agent.critic.to_bytes(), critic.to_bytes());

        let actor = agent.actor.clone();
        let y = Array1::from_elem(16, 0.3);
        update_critic(&mut agent, 1, &b, &y, Algo::Ctde).unwrap();
        assert_eq!(agent.actor.to_bytes(), actor.to_bytes());
    }

    #[test]
    fn done_masks_bootstrap_in_batch_targets() {
        let agents = vec![AgentNets::new(6, &cfg(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap()];
        let b = batch(1, 6, 5);
        let na = target_actions(&agents, &b).unwrap();
        let y = critic_targets(&agents[0], 0, &b, na.view(), 0.95, Algo::Iddpg).unwrap();
        for r in 0..6 {
            if b.done[r] > 0.5 {
                assert_eq!(y[r], b.rewards[[r, 0]]);
            }
        }
        let y0 = critic_targets(&agents[0], 0, &b, na.view(), 0.0, Algo::Iddpg).unwrap();
        assert_eq!(y0, b.rewards.column(0).to_owned());
    }

    #[test]
    fn dimension_check() {
        let agent = AgentNets::new(18, &cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(agent.check_dims(Algo::Ctde, 3).is_ok());
        assert!(agent.check_dims(Algo::Ctde, 2).is_err());
        assert!(agent.check_dims(Algo::Iddpg, 3).is_err());
    }
}
