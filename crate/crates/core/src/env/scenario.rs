use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    sample_profiles, BehaviorTable, EnvError, EvNetwork, EvProfile, PhysicalParams,
    PriceCoefficients, PriceModel, RewardConfig, Topology,
};

/// Per-hour override of the default price coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HourlyPrice {
    pub hour: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub kappa: f64,
    pub hourly: Vec<HourlyPrice>,
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self { a: 0.01, b: 0.05, c: 0.01, kappa: 1.0, hourly: Vec::new() }
    }
}

impl PriceConfig {
    pub fn build(&self, horizon: usize) -> Result<PriceModel, EnvError> {
        let mut coeffs = vec![PriceCoefficients::new(self.a, self.b, self.c); horizon];
        for o in &self.hourly {
            let slot = coeffs.get_mut(o.hour).ok_or(EnvError::HourOutOfRange {
                hour: o.hour,
                horizon,
            })?;
            *slot = PriceCoefficients::new(o.a, o.b, o.c);
        }
        PriceModel::new(coeffs, self.kappa)
    }
}

/// Everything needed to build the simulated network for an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub agents: usize,
    pub horizon: usize,
    pub dt_hours: f64,
    pub behavior: BehaviorTable,
    /// Use the distribution means for every agent and every episode instead
    /// of sampling owner behavior.
    pub fixed_behavior: bool,
    pub price: PriceConfig,
    pub reward: RewardConfig,
    pub physical: PhysicalParams,
    /// Load (kW) whose price normalizes the price observation. Defaults to
    /// every agent charging at full rate.
    pub price_reference_load_kw: Option<f64>,
    /// Network edges; a star around the source when absent.
    pub edges: Option<Vec<(usize, usize)>>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            agents: 3,
            horizon: 24,
            dt_hours: 1.0,
            behavior: BehaviorTable::default(),
            fixed_behavior: false,
            price: PriceConfig::default(),
            reward: RewardConfig::default(),
            physical: PhysicalParams::default(),
            price_reference_load_kw: None,
            edges: None,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.agents == 0 {
            return Err(EnvError::Contract("agents must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(EnvError::Contract("horizon must be at least 1".into()));
        }
        if !(self.dt_hours > 0.0 && self.dt_hours.is_finite()) {
            return Err(EnvError::Contract("dt_hours must be positive".into()));
        }
        self.price.build(self.horizon)?;
        self.reward.validate()?;
        self.topology()?;
        self.behavior.validate(&self.physical, self.horizon)?;
        if self.fixed_behavior {
            self.behavior.mean_profile(&self.physical).validate(self.horizon)?;
        }
        match self.price_reference_load_kw {
            Some(l) if !(l > 0.0 && l.is_finite()) => {
                Err(EnvError::Contract("price_reference_load_kw must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn price_model(&self) -> Result<PriceModel, EnvError> {
        self.price.build(self.horizon)
    }

    pub fn topology(&self) -> Result<Topology, EnvError> {
        match &self.edges {
            Some(edges) => Topology::new(self.agents, edges.clone()),
            None => Topology::star(self.agents),
        }
    }

    pub fn reference_load(&self) -> f64 {
        self.price_reference_load_kw
            .unwrap_or(self.agents as f64 * self.physical.max_rate_kw)
    }

    /// Price at the reference load in the first hour.
    pub fn reference_price(&self) -> Result<f64, EnvError> {
        self.price_model()?.price(self.reference_load(), 0)
    }

    /// Owner profiles for one episode: the mean profile when behavior is
    /// fixed, a fresh sample otherwise.
    pub fn episode_profiles<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<EvProfile>, EnvError> {
        if self.fixed_behavior {
            Ok(vec![self.behavior.mean_profile(&self.physical); self.agents])
        } else {
            sample_profiles(rng, self.agents, &self.behavior, &self.physical, self.horizon)
        }
    }

    pub fn network(&self, profiles: Vec<EvProfile>) -> Result<EvNetwork, EnvError> {
        EvNetwork::new(
            self.topology()?,
            profiles,
            self.price_model()?,
            self.reward,
            self.horizon,
            self.dt_hours,
        )
    }
}
