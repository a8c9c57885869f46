use serde::{Deserialize, Serialize};

use super::EnvError;

/// Weights of the per-agent reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight on the energy-cost term `price * action`.
    pub alpha1: f64,
    /// Weight on the squared battery gap.
    pub alpha2: f64,
    /// Weight on the absolute battery gap charged once, at departure.
    pub penalty_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { alpha1: 1.0, alpha2: 0.05, penalty_scale: 10.0 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let w = [self.alpha1, self.alpha2, self.penalty_scale];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EnvError::Contract(format!("reward weights must be >= 0 (got {self:?})")));
        }
        Ok(())
    }

    /// Reward of a plugged agent for one hour.
    ///
    /// `r = -alpha1 * price * action - alpha2 * (battery - expected)^2 + penalty`
    /// where `penalty = -penalty_scale * |battery - expected|` on the departure
    /// step and zero otherwise.
    pub fn reward(
        &self,
        price: f64,
        action: f64,
        battery: f64,
        expected: f64,
        at_departure: bool,
    ) -> f64 {
        let gap = battery - expected;
        let penalty = if at_departure { -self.penalty_scale * gap.abs() } else { 0.0 };
        -self.alpha1 * price * action - self.alpha2 * gap * gap + penalty
    }
}

/// Charge-only battery dynamics in kWh, clipped at capacity.
pub fn battery_update(battery: f64, action: f64, efficiency: f64, dt: f64, capacity: f64) -> f64 {
    debug_assert!(action >= 0.0);
    (battery + efficiency * action * dt).min(capacity)
}
