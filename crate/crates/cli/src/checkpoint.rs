//! Single-file bundle of every agent's networks and optimizer states.
//!
//! Layout (little endian): `EVCK`, u16 version, u8 algorithm tag, u32 agent
//! count, then a manifest of (u32 agent index, u64 blob length) pairs, then
//! the blobs in manifest order. Each blob holds actor, critic, target actor,
//! target critic and the two optimizer states in the network format.

use std::fs;
use std::path::Path;

use evcharge::marl::{critic_input_dim, AgentNets, Algo};
use evcharge::nn::{Mlp, NnError, OptimizerState, Reader};

use crate::CliError;

const MAGIC: &[u8; 4] = b"EVCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub algo: Algo,
    pub agents: Vec<AgentNets>,
}

fn algo_tag(a: Algo) -> u8 {
    match a {
        Algo::Ctde => 0,
        Algo::Iddpg => 1,
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let blobs: Vec<Vec<u8>> = self.agents.iter().map(agent_bytes).collect();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(algo_tag(self.algo));
        out.extend_from_slice(&(self.agents.len() as u32).to_le_bytes());
        for (i, b) in blobs.iter().enumerate() {
            out.extend_from_slice(&(i as u32).to_le_bytes());
            out.extend_from_slice(&(b.len() as u64).to_le_bytes());
        }
        for b in blobs {
            out.extend_from_slice(&b);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(fmt_err)? != MAGIC {
            return Err(CliError::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u16().map_err(fmt_err)?;
        if version != CHECKPOINT_VERSION {
            return Err(CliError::Checkpoint(format!(
                "checkpoint version {version} not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let algo = match r.u8().map_err(fmt_err)? {
            0 => Algo::Ctde,
            1 => Algo::Iddpg,
            t => return Err(CliError::Checkpoint(format!("unknown algorithm tag {t}"))),
        };
        let n = r.u32().map_err(fmt_err)? as usize;
        if n.saturating_mul(12) > r.remaining() {
            return Err(CliError::Checkpoint("truncated manifest".into()));
        }
        let mut lengths = Vec::with_capacity(n);
        for expected in 0..n {
            let idx = r.u32().map_err(fmt_err)? as usize;
            if idx != expected {
                return Err(CliError::Checkpoint(format!("manifest entry {expected} names agent {idx}")));
            }
            lengths.push(r.u64().map_err(fmt_err)? as usize);
        }
        let mut agents = Vec::with_capacity(n);
        for len in lengths {
            let blob = r.take(len).map_err(fmt_err)?;
            agents.push(read_agent(blob).map_err(fmt_err)?);
        }
        if r.remaining() != 0 {
            return Err(CliError::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { algo, agents })
    }

    /// Confirms the checkpoint fits a scenario with `agents` agents.
    pub fn check(&self, agents: usize) -> Result<(), CliError> {
        if self.agents.len() != agents {
            return Err(CliError::Dimension(format!(
                "checkpoint holds {} agents, config has {agents}",
                self.agents.len()
            )));
        }
        let want = critic_input_dim(self.algo, agents);
        for (i, a) in self.agents.iter().enumerate() {
            a.check_dims(self.algo, agents)
                .map_err(|e| CliError::Dimension(format!("agent {i}: {e} (critic input should be {want})")))?;
        }
        Ok(())
    }
}

fn fmt_err(e: NnError) -> CliError {
    CliError::Checkpoint(e.to_string())
}

fn agent_bytes(a: &AgentNets) -> Vec<u8> {
    let mut out = Vec::new();
    for net in [&a.actor, &a.critic, &a.actor_target, &a.critic_target] {
        out.extend(net.to_bytes());
    }
    out.extend(a.actor_opt.to_bytes());
    out.extend(a.critic_opt.to_bytes());
    out
}

fn read_agent(blob: &[u8]) -> Result<AgentNets, NnError> {
    let mut r = Reader::new(blob);
    let actor = Mlp::read_from(&mut r)?;
    let critic = Mlp::read_from(&mut r)?;
    let actor_target = Mlp::read_from(&mut r)?;
    let critic_target = Mlp::read_from(&mut r)?;
    let actor_opt = OptimizerState::read_from(&mut r)?;
    let critic_opt = OptimizerState::read_from(&mut r)?;
    if r.remaining() != 0 {
        return Err(NnError::Format("trailing bytes in agent blob".into()));
    }
    if !actor_target.same_shape(&actor) || !critic_target.same_shape(&critic) {
        return Err(NnError::Shape("target network differs from its source".into()));
    }
    if !actor_opt.fits(&actor) || !critic_opt.fits(&critic) {
        return Err(NnError::Shape("optimizer state does not fit its network".into()));
    }
    Ok(AgentNets { actor, critic, actor_target, critic_target, actor_opt, critic_opt })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CliError> {
    fs::write(path, ck.to_bytes()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evcharge::env::Scenario;
    use evcharge::marl::{init_agents, train, TrainConfig};

    fn trained() -> Checkpoint {
        let s = Scenario { agents: 2, fixed_behavior: true, ..Default::default() };
        let cfg = TrainConfig {
            episodes: 3,
            batch_size: 8,
            actor_hidden: vec![4],
            critic_hidden: vec![6],
            ..Default::default()
        };
        Checkpoint { algo: cfg.algo, agents: train(&s, &cfg).unwrap().agents }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = trained();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        for (a, b) in ck.agents.iter().zip(&back.agents) {
            let bits = |m: &Mlp| m.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.critic), bits(&b.critic));
            assert_eq!(a.critic_opt.step, b.critic_opt.step);
        }
        assert!(ck.agents[0].actor_opt.step > 0);
    }

    #[test]
    fn flipped_version_rejected() {
        let mut bytes = trained().to_bytes();
        bytes[4] ^= 0xff;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn truncation_rejected() {
        let bytes = trained().to_bytes();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn agent_count_mismatch_is_dimension_error() {
        let ck = trained();
        assert!(ck.check(2).is_ok());
        assert!(matches!(ck.check(3), Err(CliError::Dimension(_))));
    }

    #[test]
    fn iddpg_critics_rejected_as_ctde() {
        let s = Scenario { agents: 2, ..Default::default() };
        let cfg = TrainConfig { algo: Algo::Iddpg, ..Default::default() };
        let ck = Checkpoint { algo: Algo::Ctde, agents: init_agents(&s, &cfg).unwrap() };
        assert!(matches!(ck.check(2), Err(CliError::Dimension(_))));
    }
}
