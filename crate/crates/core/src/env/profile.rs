use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EnvError;

/// Maximum number of draws for one bounded field (or one ordered pair of
/// fields) before sampling gives up.
pub const RESAMPLE_CAP: usize = 1000;

/// One EV owner's behavior and battery parameters for a day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvProfile {
    pub arrival_hour: usize,
    pub departure_hour: usize,
    /// kWh in the battery when the car plugs in.
    pub battery_at_arrival: f64,
    /// kWh the owner expects at departure.
    pub expected_battery: f64,
    /// kWh.
    pub capacity: f64,
    pub efficiency: f64,
    /// kW.
    pub max_rate: f64,
}

impl EvProfile {
    pub fn validate(&self, horizon: usize) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::Profile(msg));
        if self.arrival_hour >= self.departure_hour || self.departure_hour > horizon {
            return bad(format!(
                "need 0 <= arrival ({}) < departure ({}) <= horizon ({horizon})",
                self.arrival_hour, self.departure_hour
            ));
        }
        let energies = [self.battery_at_arrival, self.expected_battery, self.capacity];
        if energies.iter().any(|e| !e.is_finite())
            || self.battery_at_arrival < 0.0
            || self.battery_at_arrival > self.expected_battery
            || self.expected_battery > self.capacity
        {
            return bad(format!(
                "need 0 <= arrival battery ({}) <= expected ({}) <= capacity ({})",
                self.battery_at_arrival, self.expected_battery, self.capacity
            ));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad(format!("efficiency {} outside (0, 1]", self.efficiency));
        }
        if !(self.max_rate > 0.0 && self.max_rate.is_finite()) {
            return bad(format!("max rate {} must be positive", self.max_rate));
        }
        Ok(())
    }

    /// Whether the car is connected during `hour`.
    pub fn is_plugged(&self, hour: usize) -> bool {
        self.arrival_hour <= hour && hour < self.departure_hour
    }

    pub fn plugged_hours(&self) -> usize {
        self.departure_hour - self.arrival_hour
    }
}

/// Truncated normal: a normal draw, redrawn until it lands inside `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDistribution {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl FieldDistribution {
    pub const fn new(mean: f64, std: f64, min: f64, max: f64) -> Self {
        Self { mean, std, min, max }
    }

    fn check(&self, name: &str) -> Result<(), EnvError> {
        let finite = [self.mean, self.std, self.min, self.max].iter().all(|v| v.is_finite());
        if !finite || self.std < 0.0 || self.min > self.max {
            return Err(EnvError::Distribution(format!(
                "{name}: need finite values, std >= 0 and min <= max (got {self:?})"
            )));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, integer: bool) -> f64 {
        // std was validated, Normal::new only fails on negative/non-finite std
        let normal = Normal::new(self.mean, self.std).expect("validated distribution");
        let v = normal.sample(rng);
        if integer {
            v.round()
        } else {
            v
        }
    }

    fn draw_bounded<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        integer: bool,
        upper: f64,
        name: &str,
    ) -> Result<f64, EnvError> {
        let hi = self.max.min(upper);
        for _ in 0..RESAMPLE_CAP {
            let v = self.draw(rng, integer);
            if v >= self.min && v <= hi {
                return Ok(v);
            }
        }
        Err(EnvError::Distribution(format!(
            "{name}: no draw within [{}, {hi}] after {RESAMPLE_CAP} attempts",
            self.min
        )))
    }
}

/// Owner-behavior distributions. Defaults reproduce the standard simulation
/// settings: arrival N(9, 1) in [7, 12], departure N(18, 1) in [16, 20],
/// expected battery N(55, 1) in [45, 65] kWh, arrival battery N(5.5, 1) in
/// [4.5, 6] kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorTable {
    pub arrival_hour: FieldDistribution,
    pub departure_hour: FieldDistribution,
    pub expected_battery: FieldDistribution,
    pub battery_at_arrival: FieldDistribution,
}

impl Default for BehaviorTable {
    fn default() -> Self {
        Self {
            arrival_hour: FieldDistribution::new(9.0, 1.0, 7.0, 12.0),
            departure_hour: FieldDistribution::new(18.0, 1.0, 16.0, 20.0),
            expected_battery: FieldDistribution::new(55.0, 1.0, 45.0, 65.0),
            battery_at_arrival: FieldDistribution::new(5.5, 1.0, 4.5, 6.0),
        }
    }
}

/// Battery hardware shared by every car in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    pub capacity_kwh: f64,
    pub efficiency: f64,
    pub max_rate_kw: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { capacity_kwh: 70.0, efficiency: 0.9, max_rate_kw: 10.0 }
    }
}

impl BehaviorTable {
    /// Rejects tables whose bounds cannot produce a valid profile.
    pub fn validate(&self, physical: &PhysicalParams, horizon: usize) -> Result<(), EnvError> {
        self.arrival_hour.check("arrival_hour")?;
        self.departure_hour.check("departure_hour")?;
        self.expected_battery.check("expected_battery")?;
        self.battery_at_arrival.check("battery_at_arrival")?;

        let unsat = |msg: String| Err(EnvError::Distribution(msg));
        let arr_lo = self.arrival_hour.min.max(0.0).ceil();
        let arr_hi = self.arrival_hour.max.floor();
        let dep_lo = self.departure_hour.min.ceil();
        let dep_hi = self.departure_hour.max.min(horizon as f64).floor();
        if arr_lo > arr_hi || dep_lo > dep_hi {
            return unsat("hour bounds contain no integer hour inside the horizon".into());
        }
        if arr_lo >= dep_hi {
            return unsat(format!(
                "arrival lower bound {arr_lo} is not below departure upper bound {dep_hi}"
            ));
        }
        if self.battery_at_arrival.min < 0.0 {
            return unsat("battery_at_arrival lower bound is negative".into());
        }
        if self.battery_at_arrival.min > self.expected_battery.max {
            return unsat(format!(
                "arrival battery lower bound {} exceeds expected battery upper bound {}",
                self.battery_at_arrival.min, self.expected_battery.max
            ));
        }
        if self.expected_battery.min > physical.capacity_kwh {
            return unsat(format!(
                "expected battery lower bound {} exceeds capacity {}",
                self.expected_battery.min, physical.capacity_kwh
            ));
        }
        Ok(())
    }

    /// The profile at the distribution means (the fixed-behavior scenario).
    pub fn mean_profile(&self, physical: &PhysicalParams) -> EvProfile {
        EvProfile {
            arrival_hour: self.arrival_hour.mean.round().max(0.0) as usize,
            departure_hour: self.departure_hour.mean.round().max(0.0) as usize,
            battery_at_arrival: self.battery_at_arrival.mean,
            expected_battery: self.expected_battery.mean,
            capacity: physical.capacity_kwh,
            efficiency: physical.efficiency,
            max_rate: physical.max_rate_kw,
        }
    }
}

/// Draws `n` owner profiles from `table`.
///
/// Hours are rounded to integers. An (arrival, departure) pair with
/// arrival >= departure is redrawn as a pair, likewise an (arrival battery,
/// expected battery) pair with arrival > expected.
pub fn sample_profiles<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    table: &BehaviorTable,
    physical: &PhysicalParams,
    horizon: usize,
) -> Result<Vec<EvProfile>, EnvError> {
    if n == 0 {
        return Err(EnvError::Distribution("agent count must be at least 1".into()));
    }
    table.validate(physical, horizon)?;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (arrival, departure) = draw_ordered(rng, "arrival/departure hours", |rng| {
            let a = table.arrival_hour.draw_bounded(rng, true, f64::INFINITY, "arrival_hour")?;
            let d = table
                .departure_hour
                .draw_bounded(rng, true, horizon as f64, "departure_hour")?;
            Ok((a, d, a < d))
        })?;
        let (arrival_battery, expected) = draw_ordered(rng, "battery levels", |rng| {
            let b = table.battery_at_arrival.draw_bounded(
                rng,
                false,
                physical.capacity_kwh,
                "battery_at_arrival",
            )?;
            let e = table.expected_battery.draw_bounded(
                rng,
                false,
                physical.capacity_kwh,
                "expected_battery",
            )?;
            Ok((b, e, b <= e))
        })?;
        let profile = EvProfile {
            arrival_hour: arrival as usize,
            departure_hour: departure as usize,
            battery_at_arrival: arrival_battery,
            expected_battery: expected,
            capacity: physical.capacity_kwh,
            efficiency: physical.efficiency,
            max_rate: physical.max_rate_kw,
        };
        profile.validate(horizon)?;
        out.push(profile);
    }
    Ok(out)
}

fn draw_ordered<R, F>(rng: &mut R, what: &str, mut draw: F) -> Result<(f64, f64), EnvError>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<(f64, f64, bool), EnvError>,
{
    for _ in 0..RESAMPLE_CAP {
        let (x, y, ok) = draw(rng)?;
        if ok {
            return Ok((x, y));
        }
    }
    Err(EnvError::Distribution(format!(
        "{what}: no ordered pair after {RESAMPLE_CAP} attempts"
    )))
}
