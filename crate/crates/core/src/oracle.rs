//! Exhaustive reference solver for tiny charging instances.
//!
//! Every joint assignment of grid rates over the plugged hours is
//! enumerated (with pruning on charge that can no longer be reached), and
//! the feasible schedule with the lowest network cost wins. Ties go to the
//! lower PAR and then to the lexicographically smaller schedule, so the
//! result is unique.

use std::cmp::Ordering;

use thiserror::Error;

use crate::env::{battery_update, EnvError, EvProfile, PriceModel};
use crate::metrics;

pub const DEFAULT_FEASIBILITY_TOL: f64 = 0.5;
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle instance: {0}")]
    Invalid(String),
    #[error("no schedule on the grid reaches every owner's target")]
    Infeasible,
    #[error("{required} joint schedules exceed the enumeration cap of {cap}")]
    CapExceeded { required: f64, cap: u64 },
    #[error("schedule dimensions: {0}")]
    Dimension(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleInstance {
    pub profiles: Vec<EvProfile>,
    pub price_model: PriceModel,
    pub horizon: usize,
    pub dt: f64,
    /// Allowed charging rates in kW.
    pub action_grid: Vec<f64>,
    /// kWh an owner may fall short of the expected battery.
    pub feasibility_tol: f64,
    pub enumeration_cap: u64,
}

impl OracleInstance {
    /// Instance with the default tolerance and cap.
    pub fn new(
        profiles: Vec<EvProfile>,
        price_model: PriceModel,
        horizon: usize,
        dt: f64,
        action_grid: Vec<f64>,
    ) -> Result<Self, OracleError> {
        let inst = Self {
            profiles,
            price_model,
            horizon,
            dt,
            action_grid,
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::Invalid(m));
        if self.profiles.is_empty() {
            return bad("no agents".into());
        }
        if self.horizon == 0 || self.price_model.horizon() < self.horizon {
            return bad(format!(
                "horizon {} not covered by a {}-hour price model",
                self.horizon,
                self.price_model.horizon()
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive".into());
        }
        if !(self.feasibility_tol >= 0.0 && self.feasibility_tol.is_finite()) {
            return bad("feasibility_tol must be non-negative".into());
        }
        if self.action_grid.is_empty() || !self.action_grid.contains(&0.0) {
            return bad("action grid must contain 0".into());
        }
        for p in &self.profiles {
            p.validate(self.horizon).map_err(OracleError::from)?;
            if let Some(a) = self.action_grid.iter().find(|&&a| !(a >= 0.0 && a <= p.max_rate)) {
                return bad(format!("grid rate {a} outside [0, {}]", p.max_rate));
            }
        }
        Ok(())
    }

    /// Number of joint schedules a full enumeration visits.
    pub fn schedule_count(&self) -> f64 {
        let slots: usize = self.profiles.iter().map(|p| p.plugged_hours()).sum();
        (self.action_grid.len() as f64).powi(slots as i32)
    }

    fn check_cap(&self) -> Result<(), OracleError> {
        let required = self.schedule_count();
        if required > self.enumeration_cap as f64 {
            return Err(OracleError::CapExceeded { required, cap: self.enumeration_cap });
        }
        Ok(())
    }

    /// Grid sorted ascending with duplicates removed.
    fn grid(&self) -> Vec<f64> {
        let mut g = self.action_grid.clone();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    fn target(&self, i: usize) -> f64 {
        self.profiles[i].expected_battery - self.feasibility_tol
    }

    /// `[earliest arrival, latest departure)`.
    pub fn charging_window(&self) -> (usize, usize) {
        let start = self.profiles.iter().map(|p| p.arrival_hour).min().unwrap_or(0);
        let end = self.profiles.iter().map(|p| p.departure_hour).max().unwrap_or(0).min(self.horizon);
        (start, end.max(start))
    }
}

/// Optimal schedule and its figures of merit.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// `schedule[hour][agent]` in kW.
    pub schedule: Vec<Vec<f64>>,
    pub loads: Vec<f64>,
    pub cost: f64,
    /// PAR over the charging window; NaN if nothing is drawn.
    pub par: f64,
    /// Complete schedules evaluated.
    pub evaluated: u64,
}

/// Total network cost, window PAR and hourly loads of a schedule.
pub fn schedule_cost(schedule: &[Vec<f64>], inst: &OracleInstance) -> Result<(f64, f64, Vec<f64>), OracleError> {
    check_dims(schedule, inst)?;
    let loads: Vec<f64> = schedule.iter().map(|row| row.iter().sum()).collect();
    // Summing hourly costs in sorted order makes schedules that differ only
    // by a permutation of equally priced hours tie exactly.
    let mut hourly = loads
        .iter()
        .enumerate()
        .map(|(h, &l)| inst.price_model.network_cost(l, h, inst.dt))
        .collect::<Result<Vec<_>, _>>()?;
    hourly.sort_by(f64::total_cmp);
    let cost = hourly.iter().sum();
    let (s, e) = inst.charging_window();
    let par = metrics::par(&loads[s..e]).unwrap_or(f64::NAN);
    Ok((cost, par, loads))
}

fn check_dims(schedule: &[Vec<f64>], inst: &OracleInstance) -> Result<(), OracleError> {
    if schedule.len() != inst.horizon {
        return Err(OracleError::Dimension(format!("{} hours, expected {}", schedule.len(), inst.horizon)));
    }
    if let Some(row) = schedule.iter().find(|r| r.len() != inst.profiles.len()) {
        return Err(OracleError::Dimension(format!("{} agents, expected {}", row.len(), inst.profiles.len())));
    }
    Ok(())
}

/// Terminal battery of every agent under a schedule, clipped at capacity.
pub fn final_batteries(schedule: &[Vec<f64>], inst: &OracleInstance) -> Result<Vec<f64>, OracleError> {
    check_dims(schedule, inst)?;
    Ok(inst
        .profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            schedule.iter().fold(p.battery_at_arrival, |b, row| {
                battery_update(b, row[i], p.efficiency, inst.dt, p.capacity)
            })
        })
        .collect())
}

/// Whether every action is on the grid, zero outside the plug window, and
/// every owner ends within tolerance of the target.
pub fn check_feasible(schedule: &[Vec<f64>], inst: &OracleInstance) -> Result<bool, OracleError> {
    check_dims(schedule, inst)?;
    for (h, row) in schedule.iter().enumerate() {
        for (i, &a) in row.iter().enumerate() {
            if !inst.action_grid.contains(&a) {
                return Ok(false);
            }
            if a != 0.0 && !inst.profiles[i].is_plugged(h) {
                return Ok(false);
            }
        }
    }
    let finals = final_batteries(schedule, inst)?;
    Ok(finals.iter().enumerate().all(|(i, &b)| b >= inst.target(i)))
}

/// Nearest grid point; ties go to the lower rate.
pub fn snap_to_grid(value: f64, grid: &[f64]) -> f64 {
    let mut best = f64::NAN;
    for &g in grid {
        let closer = match (g - value).abs().total_cmp(&(best - value).abs()) {
            Ordering::Less => true,
            Ordering::Equal => g < best,
            Ordering::Greater => false,
        };
        if best.is_nan() || closer {
            best = g;
        }
    }
    best
}

/// Total order used to pick among optimal schedules.
fn better(cost: f64, par: f64, flat: &[f64], best: &(f64, f64, Vec<f64>)) -> bool {
    cost.total_cmp(&best.0)
        .then_with(|| par.total_cmp(&best.1))
        .then_with(|| {
            flat.iter()
                .zip(&best.2)
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .is_lt()
}

struct Search<'a> {
    inst: &'a OracleInstance,
    grid: Vec<f64>,
    /// Plugged (hour, agent) slots in hour-major order.
    slots: Vec<(usize, usize)>,
    /// Most charge agent i can still add from slot k onward, ignoring capacity.
    headroom: Vec<Vec<f64>>,
    schedule: Vec<Vec<f64>>,
    batteries: Vec<f64>,
    best: Option<(f64, f64, Vec<f64>)>,
    evaluated: u64,
}

impl Search<'_> {
    fn visit(&mut self, k: usize) -> Result<(), OracleError> {
        let n = self.inst.profiles.len();
        for i in 0..n {
            if self.batteries[i] + self.headroom[k][i] < self.inst.target(i) {
                return Ok(());
            }
        }
        if k == self.slots.len() {
            self.evaluated += 1;
            let (cost, par, _) = schedule_cost(&self.schedule, self.inst)?;
            let flat: Vec<f64> = self.schedule.iter().flatten().copied().collect();
            if self.best.as_ref().map_or(true, |b| better(cost, par, &flat, b)) {
                self.best = Some((cost, par, flat));
            }
            return Ok(());
        }
        let (h, i) = self.slots[k];
        let p = &self.inst.profiles[i];
        let before = self.batteries[i];
        for g in 0..self.grid.len() {
            let a = self.grid[g];
            self.schedule[h][i] = a;
            self.batteries[i] = battery_update(before, a, p.efficiency, self.inst.dt, p.capacity);
            self.visit(k + 1)?;
        }
        self.schedule[h][i] = 0.0;
        self.batteries[i] = before;
        Ok(())
    }
}

/// Cost-optimal feasible schedule on the grid.
pub fn solve(inst: &OracleInstance) -> Result<OracleSolution, OracleError> {
    inst.validate()?;
    inst.check_cap()?;
    let n = inst.profiles.len();
    let grid = inst.grid();
    let top = *grid.last().unwrap_or(&0.0);
    let slots: Vec<(usize, usize)> = (0..inst.horizon)
        .flat_map(|h| (0..n).map(move |i| (h, i)))
        .filter(|&(h, i)| inst.profiles[i].is_plugged(h))
        .collect();
    let mut headroom = vec![vec![0.0; n]; slots.len() + 1];
    for k in (0..slots.len()).rev() {
        headroom[k] = headroom[k + 1].clone();
        let (_, i) = slots[k];
        let p = &inst.profiles[i];
        headroom[k][i] += p.efficiency * top * inst.dt;
    }
    let mut search = Search {
        inst,
        grid,
        slots,
        headroom,
        schedule: vec![vec![0.0; n]; inst.horizon],
        batteries: inst.profiles.iter().map(|p| p.battery_at_arrival).collect(),
        best: None,
        evaluated: 0,
    };
    search.visit(0)?;
    let evaluated = search.evaluated;
    let (_, _, flat) = search.best.ok_or(OracleError::Infeasible)?;
    let schedule: Vec<Vec<f64>> = flat.chunks(n).map(|c| c.to_vec()).collect();
    let (cost, par, loads) = schedule_cost(&schedule, inst)?;
    Ok(OracleSolution { schedule, loads, cost, par, evaluated })
}

/// Walks every joint grid schedule without pruning and confirms none that
/// is feasible is strictly cheaper than `solution`.
pub fn verify_optimal(inst: &OracleInstance, solution: &OracleSolution) -> Result<bool, OracleError> {
    inst.check_cap()?;
    let n = inst.profiles.len();
    let grid = inst.grid();
    let slots: Vec<(usize, usize)> = (0..inst.horizon)
        .flat_map(|h| (0..n).map(move |i| (h, i)))
        .filter(|&(h, i)| inst.profiles[i].is_plugged(h))
        .collect();
    let mut digits = vec![0usize; slots.len()];
    let mut schedule = vec![vec![0.0; n]; inst.horizon];
    loop {
        for (&(h, i), &d) in slots.iter().zip(&digits) {
            schedule[h][i] = grid[d];
        }
        if check_feasible(&schedule, inst)? && schedule_cost(&schedule, inst)?.0 < solution.cost {
            return Ok(false);
        }
        // Odometer increment; done once every digit wraps.
        let mut k = 0;
        loop {
            if k == digits.len() {
                return Ok(true);
            }
            digits[k] += 1;
            if digits[k] < grid.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PriceCoefficients;

    fn profile(arr: usize, dep: usize, b0: f64, bexp: f64) -> EvProfile {
        EvProfile {
            arrival_hour: arr,
            departure_hour: dep,
            battery_at_arrival: b0,
            expected_battery: bexp,
            capacity: 30.0,
            efficiency: 1.0,
            max_rate: 10.0,
        }
    }

    fn prices(h: usize) -> PriceModel {
        PriceModel::uniform(h, PriceCoefficients { a: 0.01, b: 0.05, c: 0.01 }, 1.0).unwrap()
    }

    fn two_agent(need: f64) -> OracleInstance {
        let p = profile(0, 3, 5.0, 5.0 + need);
        OracleInstance::new(vec![p; 2], prices(3), 3, 1.0, vec![0.0, 5.0, 10.0]).unwrap()
    }

    #[test]
    fn single_slot_forced_full_rate() {
        let inst = OracleInstance::new(vec![profile(0, 1, 0.0, 10.0)], prices(1), 1, 1.0, vec![0.0, 10.0]).unwrap();
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.schedule, vec![vec![10.0]]);
        assert_eq!(sol.cost, inst.price_model.network_cost(10.0, 0, 1.0).unwrap());
    }

    #[test]
    fn two_agents_flatten_the_load() {
        let inst = two_agent(10.0);
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.loads.iter().sum::<f64>(), 20.0);
        let max = sol.loads.iter().cloned().fold(f64::MIN, f64::max);
        let min = sol.loads.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(max - min, 5.0);
        assert!(check_feasible(&sol.schedule, &inst).unwrap());
        assert!(verify_optimal(&inst, &sol).unwrap());
        assert_eq!(inst.schedule_count(), 729.0);
    }

    #[test]
    fn fifteen_kwh_each_is_perfectly_flat() {
        let sol = solve(&two_agent(15.0)).unwrap();
        assert_eq!(sol.loads, vec![10.0, 10.0, 10.0]);
        assert_eq!(sol.par, 1.0);
    }

    #[test]
    fn price_scaling_keeps_argmin() {
        let inst = two_agent(10.0);
        let sol = solve(&inst).unwrap();
        let scaled = OracleInstance { price_model: inst.price_model.scaled(3.0).unwrap(), ..inst.clone() };
        let s2 = solve(&scaled).unwrap();
        assert_eq!(s2.schedule, sol.schedule);
        assert!((s2.cost - 3.0 * sol.cost).abs() <= 1e-12 * s2.cost);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let inst = OracleInstance::new(vec![profile(0, 2, 0.0, 25.0)], prices(2), 2, 1.0, vec![0.0, 5.0, 10.0]).unwrap();
        assert_eq!(solve(&inst), Err(OracleError::Infeasible));
    }

    #[test]
    fn cap_is_enforced() {
        let mut inst = two_agent(10.0);
        inst.enumeration_cap = 728;
        assert!(matches!(solve(&inst), Err(OracleError::CapExceeded { .. })));
    }

    #[test]
    fn feasibility_checks() {
        let inst = two_agent(10.0);
        let zeros = vec![vec![0.0; 2]; 3];
        assert!(!check_feasible(&zeros, &inst).unwrap());
        let off_grid = vec![vec![7.0, 7.0]; 3];
        assert!(!check_feasible(&off_grid, &inst).unwrap());
        let late = OracleInstance { profiles: vec![profile(1, 3, 5.0, 15.0); 2], ..inst.clone() };
        let mut s = vec![vec![10.0, 0.0], vec![0.0, 10.0], vec![0.0, 0.0]];
        assert!(!check_feasible(&s, &late).unwrap());
        s[0][0] = 0.0;
        s[2][0] = 10.0;
        assert!(check_feasible(&s, &late).unwrap());
        assert!(check_feasible(&zeros[..2], &inst).is_err());
    }

    #[test]
    fn snapping() {
        let g = [0.0, 5.0, 10.0];
        assert_eq!(snap_to_grid(3.2, &g), 5.0);
        assert_eq!(snap_to_grid(2.5, &g), 0.0);
        assert_eq!(snap_to_grid(9.9, &g), 10.0);
        assert_eq!(snap_to_grid(-1.0, &g), 0.0);
    }

    #[test]
    fn grid_must_contain_zero() {
        let r = OracleInstance::new(vec![profile(0, 1, 0.0, 10.0)], prices(1), 1, 1.0, vec![5.0, 10.0]);
        assert!(matches!(r, Err(OracleError::Invalid(_))));
    }
}
