use ndarray::{Array1, Array2};
use rand::Rng;

use super::{MarlError, OBS_DIM};

/// One joint experience tuple.
///
/// Observations are normalized; actions are stored as fractions of each
/// agent's maximum rate, i.e. in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub joint_obs: Vec<[f64; OBS_DIM]>,
    pub joint_action: Vec<f64>,
    pub rewards: Vec<f64>,
    pub joint_next_obs: Vec<[f64; OBS_DIM]>,
    pub done: bool,
}

impl Transition {
    pub fn agents(&self) -> usize {
        self.joint_action.len()
    }

    fn check(&self) -> Result<(), MarlError> {
        let n = self.joint_action.len();
        if self.joint_obs.len() != n || self.rewards.len() != n || self.joint_next_obs.len() != n {
            return Err(MarlError::Buffer("transition sequences differ in length".into()));
        }
        let finite = self.joint_action.iter().chain(&self.rewards).all(|v| v.is_finite())
            && self.joint_obs.iter().chain(&self.joint_next_obs).flatten().all(|v| v.is_finite());
        if !finite {
            return Err(MarlError::NonFinite("transition".into()));
        }
        Ok(())
    }
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self, MarlError> {
        if capacity == 0 {
            return Err(MarlError::Config("buffer capacity must be positive".into()));
        }
        Ok(Self { capacity, storage: Vec::with_capacity(capacity.min(1 << 16)), next: 0 })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores a transition, evicting the oldest one when full.
    pub fn store(&mut self, t: Transition) -> Result<(), MarlError> {
        t.check()?;
        if let Some(first) = self.storage.first() {
            if first.agents() != t.agents() {
                return Err(MarlError::Buffer(format!(
                    "transition for {} agents in a buffer of {}-agent transitions",
                    t.agents(),
                    first.agents()
                )));
            }
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// `k` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Result<Vec<&Transition>, MarlError> {
        if k == 0 || self.storage.len() < k {
            return Err(MarlError::Buffer(format!(
                "cannot sample {k} transitions from a buffer holding {}",
                self.storage.len()
            )));
        }
        Ok((0..k).map(|_| &self.storage[rng.gen_range(0..self.storage.len())]).collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> Result<Batch, MarlError> {
        Ok(Batch::from_transitions(&self.sample(rng, k)?))
    }
}

/// Column-major view of sampled transitions used by the update rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Per agent, `(B, OBS_DIM)`.
    pub obs: Vec<Array2<f64>>,
    /// `(B, N)` action fractions.
    pub actions: Array2<f64>,
    /// `(B, N)`.
    pub rewards: Array2<f64>,
    pub next_obs: Vec<Array2<f64>>,
    /// 1.0 for terminal transitions.
    pub done: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        let b = items.len();
        let n = items.first().map_or(0, |t| t.agents());
        let obs_of = |next: bool| -> Vec<Array2<f64>> {
            (0..n)
                .map(|j| {
                    Array2::from_shape_fn((b, OBS_DIM), |(r, c)| {
                        let t = items[r];
                        if next { t.joint_next_obs[j][c] } else { t.joint_obs[j][c] }
                    })
                })
                .collect()
        };
        Self {
            obs: obs_of(false),
            actions: Array2::from_shape_fn((b, n), |(r, j)| items[r].joint_action[j]),
            rewards: Array2::from_shape_fn((b, n), |(r, j)| items[r].rewards[j]),
            next_obs: obs_of(true),
            done: items.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    pub fn agents(&self) -> usize {
        self.obs.len()
    }
}
