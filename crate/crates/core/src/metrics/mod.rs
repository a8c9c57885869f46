//! Evaluation quantities: peak-to-average ratio, network and per-user costs,
//! satisfaction, cross-seed aggregation and CSV output.

mod table;

use thiserror::Error;

use crate::env::{EnvError, EpisodeTrace, EvProfile, PriceModel};

pub use table::{format_number, read_csv, write_csv, CsvRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("peak-to-average ratio undefined: {0}")]
    UndefinedPar(String),
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
    #[error("nothing to aggregate")]
    Empty,
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Peak-to-average ratio `T * max(L) / sum(L)` of a non-negative demand
/// series with at least one positive entry.
pub fn par(demand: &[f64]) -> Result<f64, MetricsError> {
    if demand.is_empty() {
        return Err(MetricsError::UndefinedPar("empty series".into()));
    }
    if demand.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(MetricsError::UndefinedPar("negative or non-finite demand".into()));
    }
    let peak = demand.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(MetricsError::UndefinedPar("all-zero demand".into()));
    }
    // A flat series is exactly 1; summation rounding would say otherwise.
    if demand.iter().all(|&l| l == peak) {
        return Ok(1.0);
    }
    let total: f64 = demand.iter().sum();
    Ok(demand.len() as f64 * peak / total)
}

/// Network cost and per-user bills of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeCosts {
    pub network_cost: f64,
    pub per_agent: Vec<f64>,
}

/// Recomputes costs from a trace: the network pays `sum_h C_h(L_h)` and each
/// user its proportional share of every hour.
pub fn episode_costs(trace: &EpisodeTrace, prices: &PriceModel, dt: f64) -> Result<EpisodeCosts, MetricsError> {
    let hours = trace.final_state.hour;
    let n = trace.agents;
    let mut loads = vec![vec![0.0; n]; hours];
    let mut totals = vec![None; hours];
    for r in &trace.records {
        if r.hour >= hours || r.agent_id >= n {
            return Err(MetricsError::Inconsistent(format!(
                "record for hour {} agent {} outside the trace",
                r.hour, r.agent_id
            )));
        }
        loads[r.hour][r.agent_id] = r.action_kw;
        match totals[r.hour] {
            None => totals[r.hour] = Some(r.total_demand_kw),
            Some(t) if t != r.total_demand_kw => {
                return Err(MetricsError::Inconsistent(format!(
                    "hour {}: logged totals disagree ({t} vs {})",
                    r.hour, r.total_demand_kw
                )))
            }
            _ => {}
        }
    }

    let mut network_cost = 0.0;
    let mut per_agent = vec![0.0; n];
    for (h, hour_loads) in loads.iter().enumerate() {
        let total: f64 = hour_loads.iter().sum();
        let logged = totals[h].unwrap_or(0.0);
        if (total - logged).abs() > 1e-9 * total.abs().max(1.0) {
            return Err(MetricsError::Inconsistent(format!(
                "hour {h}: actions sum to {total} but total demand is {logged}"
            )));
        }
        network_cost += prices.network_cost(total, h, dt)?;
        for (bill, &l) in per_agent.iter_mut().zip(hour_loads) {
            *bill += prices.billing_share(l, total, h, dt)?;
        }
    }
    Ok(EpisodeCosts { network_cost, per_agent })
}

/// Whether the battery at departure is within `tol_fraction * expected`.
pub fn is_satisfied(final_battery: f64, profile: &EvProfile, tol_fraction: f64) -> bool {
    (final_battery - profile.expected_battery).abs() <= tol_fraction * profile.expected_battery
}

/// Fraction of agents whose battery at departure is within tolerance.
pub fn satisfaction(final_batteries: &[f64], profiles: &[EvProfile], tol_fraction: f64) -> f64 {
    if profiles.is_empty() {
        return 0.0;
    }
    let ok = final_batteries
        .iter()
        .zip(profiles)
        .filter(|(&b, p)| is_satisfied(b, p, tol_fraction))
        .count();
    ok as f64 / profiles.len() as f64
}

/// Noise-free evaluation of a set of policies, averaged over episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    /// Mean over episodes of the full-day peak-to-average ratio.
    pub par: f64,
    /// Mean over episodes of the ratio restricted to the charging phase
    /// (earliest arrival to latest departure).
    pub par_charging_phase: f64,
    /// Mean network cost per episode.
    pub total_network_cost: f64,
    /// Mean bill per episode for each agent.
    pub per_agent_cost: Vec<f64>,
    /// Mean fraction of agents satisfied at departure.
    pub satisfaction_rate: f64,
    /// Fraction of episodes in which every agent was satisfied.
    pub all_satisfied_rate: f64,
    pub mean_price_by_hour: Vec<f64>,
    pub mean_demand_by_hour: Vec<f64>,
}

impl EvalReport {
    pub fn mean_agent_cost(&self) -> f64 {
        mean(&self.per_agent_cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator), 0 for a single value.
    pub std: f64,
}

impl FieldStats {
    pub fn of(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::Empty);
        }
        let m = mean(values);
        let std = if values.len() < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
            (ss / (values.len() - 1) as f64).sqrt()
        };
        Ok(Self { mean: m, std })
    }
}

/// Mean and spread of each report field across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub runs: usize,
    pub par: FieldStats,
    pub par_charging_phase: FieldStats,
    pub network_cost: FieldStats,
    pub mean_agent_cost: FieldStats,
    pub satisfaction_rate: FieldStats,
    pub per_agent_cost: Vec<FieldStats>,
}

pub fn aggregate(reports: &[EvalReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let field = |f: fn(&EvalReport) -> f64| {
        FieldStats::of(&reports.iter().map(f).collect::<Vec<_>>())
    };
    let n = reports[0].per_agent_cost.len();
    if reports.iter().any(|r| r.per_agent_cost.len() != n) {
        return Err(MetricsError::Inconsistent("reports differ in agent count".into()));
    }
    let per_agent_cost = (0..n)
        .map(|i| FieldStats::of(&reports.iter().map(|r| r.per_agent_cost[i]).collect::<Vec<_>>()))
        .collect::<Result<_, _>>()?;
    Ok(AggregateReport {
        runs: reports.len(),
        par: field(|r| r.par)?,
        par_charging_phase: field(|r| r.par_charging_phase)?,
        network_cost: field(|r| r.total_network_cost)?,
        mean_agent_cost: field(|r| r.mean_agent_cost())?,
        satisfaction_rate: field(|r| r.satisfaction_rate)?,
        per_agent_cost,
    })
}

/// Per-seed difference `treatment - baseline` between two matched arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDelta {
    pub seed: u64,
    pub par: f64,
    pub par_charging_phase: f64,
    pub network_cost: f64,
    pub mean_agent_cost: f64,
}

pub fn paired_deltas(
    treatment: &[(u64, EvalReport)],
    baseline: &[(u64, EvalReport)],
) -> Result<Vec<PairedDelta>, MetricsError> {
    if treatment.is_empty() || baseline.is_empty() {
        return Err(MetricsError::Empty);
    }
    if treatment.len() != baseline.len() {
        return Err(MetricsError::Inconsistent("arms have different seed counts".into()));
    }
    treatment
        .iter()
        .zip(baseline)
        .map(|((s1, t), (s2, b))| {
            if s1 != s2 {
                return Err(MetricsError::Inconsistent(format!("unmatched seeds {s1} and {s2}")));
            }
            Ok(PairedDelta {
                seed: *s1,
                par: t.par - b.par,
                par_charging_phase: t.par_charging_phase - b.par_charging_phase,
                network_cost: t.total_network_cost - b.total_network_cost,
                mean_agent_cost: t.mean_agent_cost() - b.mean_agent_cost(),
            })
        })
        .collect()
}

impl CsvRecord for PairedDelta {
    fn header() -> &'static [&'static str] {
        &["seed", "par_delta", "par_charging_phase_delta", "network_cost_delta", "mean_agent_cost_delta"]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            format_number(self.par),
            format_number(self.par_charging_phase),
            format_number(self.network_cost),
            format_number(self.mean_agent_cost),
        ]
    }
}

impl CsvRecord for crate::env::TraceRecord {
    fn header() -> &'static [&'static str] {
        &["hour", "agent_id", "action_kw", "battery_kwh", "price", "reward", "total_demand_kw"]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.hour.to_string(),
            self.agent_id.to_string(),
            format_number(self.action_kw),
            format_number(self.battery_kwh),
            format_number(self.price),
            format_number(self.reward),
            format_number(self.total_demand_kw),
        ]
    }
}

/// One hour of an averaged demand/price profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyProfileRow {
    pub hour: usize,
    pub mean_demand_kw: f64,
    pub mean_price: f64,
}

impl HourlyProfileRow {
    pub fn from_report(report: &EvalReport) -> Vec<Self> {
        report
            .mean_demand_by_hour
            .iter()
            .zip(&report.mean_price_by_hour)
            .enumerate()
            .map(|(hour, (&d, &p))| Self { hour, mean_demand_kw: d, mean_price: p })
            .collect()
    }
}

impl CsvRecord for HourlyProfileRow {
    fn header() -> &'static [&'static str] {
        &["hour", "mean_demand_kw", "mean_price"]
    }

    fn row(&self) -> Vec<String> {
        vec![self.hour.to_string(), format_number(self.mean_demand_kw), format_number(self.mean_price)]
    }
}

/// Evaluation summary of one (seed, algorithm) run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummaryRow {
    pub seed: u64,
    pub algo: String,
    pub par_full_day: f64,
    pub par_charging_phase: f64,
    pub network_cost: f64,
    pub mean_agent_cost: f64,
    pub satisfaction_rate: f64,
}

impl EvalSummaryRow {
    pub fn new(seed: u64, algo: impl Into<String>, report: &EvalReport) -> Self {
        Self {
            seed,
            algo: algo.into(),
            par_full_day: report.par,
            par_charging_phase: report.par_charging_phase,
            network_cost: report.total_network_cost,
            mean_agent_cost: report.mean_agent_cost(),
            satisfaction_rate: report.satisfaction_rate,
        }
    }
}

impl CsvRecord for EvalSummaryRow {
    fn header() -> &'static [&'static str] {
        &[
            "seed",
            "algo",
            "par_full_day",
            "par_charging_phase",
            "network_cost",
            "mean_agent_cost",
            "satisfaction_rate",
        ]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.algo.clone(),
            format_number(self.par_full_day),
            format_number(self.par_charging_phase),
            format_number(self.network_cost),
            format_number(self.mean_agent_cost),
            format_number(self.satisfaction_rate),
        ]
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
