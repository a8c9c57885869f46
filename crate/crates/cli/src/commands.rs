use std::fs;
use std::path::{Path, PathBuf};

use evcharge::env::EvNetwork;
use evcharge::marl::{evaluate, init_agents, policy_action, train_from, AgentNets, Algo, EpisodeLog};
use evcharge::metrics::{
    aggregate, format_number, paired_deltas, write_csv, AggregateReport, CsvRecord, EvalReport, EvalSummaryRow,
    FieldStats, HourlyProfileRow, PairedDelta,
};
use evcharge::oracle::{check_feasible, schedule_cost, snap_to_grid, solve, verify_optimal, OracleSolution};

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::CliError;

pub const TRAIN_LOG: &str = "train_log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.evck";
pub const CONFIG_FILE: &str = "config.toml";
pub const EVAL_SUMMARY: &str = "eval_summary.csv";
pub const HOURLY_PROFILE: &str = "hourly_profile.csv";

/// Episodes at the end of training summarized on the console.
const FINAL_WINDOW: usize = 100;

fn prepare_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !force {
            return Err(CliError::Exists(dir.to_path_buf()));
        }
        fs::remove_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Mean of the finite values, NaN if there are none.
fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub logs: Vec<EpisodeLog>,
    pub agents: Vec<AgentNets>,
    pub final_par: f64,
    pub final_network_cost: f64,
    pub final_satisfaction: f64,
}

pub fn run_dir_name(cfg: &RunConfig, algo: Algo, seed: u64) -> Result<String, CliError> {
    Ok(format!("{}-{algo}-seed{seed}", cfg.content_hash()?))
}

/// Trains one arm into `<root>/<hash>-<algo>-seed<seed>`.
pub fn cmd_train(cfg: &RunConfig, seed: u64, force: bool) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let dir = cfg.output_root().join(run_dir_name(cfg, cfg.algo, seed)?);
    train_into(cfg, cfg.algo, seed, &dir, force)
}

fn train_into(cfg: &RunConfig, algo: Algo, seed: u64, dir: &Path, force: bool) -> Result<TrainSummary, CliError> {
    prepare_dir(dir, force)?;
    let effective = RunConfig { algo, seeds: vec![seed], ..cfg.clone() };
    write_text(&dir.join(CONFIG_FILE), &effective.to_toml()?)?;

    let tc = cfg.train_config(algo, seed);
    let agents = init_agents(&cfg.scenario, &tc)?;
    let outcome = train_from(&cfg.scenario, &tc, agents, |log| {
        if (log.episode + 1) % 100 == 0 {
            log::info!(
                "{algo} seed {seed} episode {}: reward {:.3} cost {:.3} par {:.4} satisfaction {:.3}",
                log.episode + 1,
                log.mean_reward,
                log.network_cost,
                log.par,
                log.satisfaction_rate
            );
        }
    })
    .map_err(|e| CliError::from(e).context(&format!("{algo} seed {seed}")))?;

    write_csv(&dir.join(TRAIN_LOG), &outcome.logs)?;
    let ck = Checkpoint { algo, agents: outcome.agents };
    save_checkpoint(&ck, &dir.join(CHECKPOINT_FILE))?;

    let tail = &outcome.logs[outcome.logs.len().saturating_sub(FINAL_WINDOW)..];
    let window = tail.len();
    let summary = TrainSummary {
        run_dir: dir.to_path_buf(),
        final_par: finite_mean(tail.iter().map(|l| l.par)),
        final_network_cost: finite_mean(tail.iter().map(|l| l.network_cost)),
        final_satisfaction: finite_mean(tail.iter().map(|l| l.satisfaction_rate)),
        logs: outcome.logs,
        agents: ck.agents,
    };
    println!(
        "{algo} seed {seed}: last {window} episodes par {} network cost {} satisfaction {} -> {}",
        format_number(summary.final_par),
        format_number(summary.final_network_cost),
        format_number(summary.final_satisfaction),
        dir.display()
    );
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub out_dir: PathBuf,
}

/// Evaluates a checkpoint noise-free and writes the summary and hourly
/// profile. Output defaults to `eval-seed<seed>` beside the checkpoint.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
    out: Option<&Path>,
    force: bool,
) -> Result<EvalOutput, CliError> {
    cfg.validate()?;
    let ck = load_checkpoint(checkpoint)?;
    ck.check(cfg.scenario.agents)?;
    let report = evaluate(&ck.agents, &cfg.scenario, episodes, seed, cfg.training.satisfaction_tol)?;
    let out_dir = match out {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(format!("eval-seed{seed}")),
    };
    prepare_dir(&out_dir, force)?;
    write_csv(&out_dir.join(EVAL_SUMMARY), &[EvalSummaryRow::new(seed, ck.algo.as_str(), &report)])?;
    write_csv(&out_dir.join(HOURLY_PROFILE), &HourlyProfileRow::from_report(&report))?;
    println!(
        "{} seed {seed}: par {} (charging phase {}) network cost {} mean bill {} satisfaction {}",
        ck.algo,
        format_number(report.par),
        format_number(report.par_charging_phase),
        format_number(report.total_network_cost),
        format_number(report.mean_agent_cost()),
        format_number(report.satisfaction_rate)
    );
    Ok(EvalOutput { report, out_dir })
}

/// One row of the cross-seed aggregate table.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub algo: String,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

impl AggregateRow {
    pub fn from_report(algo: Algo, a: &AggregateReport) -> Vec<Self> {
        let row = |metric: String, s: &FieldStats| AggregateRow {
            algo: algo.to_string(),
            metric,
            runs: a.runs,
            mean: s.mean,
            std: s.std,
        };
        let mut rows = vec![
            row("par_full_day".into(), &a.par),
            row("par_charging_phase".into(), &a.par_charging_phase),
            row("network_cost".into(), &a.network_cost),
            row("mean_agent_cost".into(), &a.mean_agent_cost),
            row("satisfaction_rate".into(), &a.satisfaction_rate),
        ];
        rows.extend(a.per_agent_cost.iter().enumerate().map(|(i, s)| row(format!("agent_{i}_cost"), s)));
        rows
    }
}

impl CsvRecord for AggregateRow {
    fn header() -> &'static [&'static str] {
        &["algo", "metric", "runs", "mean", "std"]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.algo.clone(),
            self.metric.clone(),
            self.runs.to_string(),
            format_number(self.mean),
            format_number(self.std),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub ctde: Vec<EvalReport>,
    pub iddpg: Vec<EvalReport>,
    /// CTDE minus I-DDPG per seed.
    pub deltas: Vec<PairedDelta>,
    pub ctde_aggregate: AggregateReport,
    pub iddpg_aggregate: AggregateReport,
}

/// Hourly profile averaged over seeds.
fn mean_hourly(reports: &[EvalReport]) -> Vec<HourlyProfileRow> {
    let k = reports.len() as f64;
    let mut rows = HourlyProfileRow::from_report(&reports[0]);
    for (h, row) in rows.iter_mut().enumerate() {
        row.mean_demand_kw = reports.iter().map(|r| r.mean_demand_by_hour[h]).sum::<f64>() / k;
        row.mean_price = reports.iter().map(|r| r.mean_price_by_hour[h]).sum::<f64>() / k;
    }
    rows
}

/// Trains and evaluates both arms on every seed into `<root>/compare-<hash>`.
/// Both arms of a seed see the same owner samples in training and in
/// evaluation.
pub fn cmd_compare(cfg: &RunConfig, force: bool) -> Result<CompareReport, CliError> {
    cfg.validate()?;
    let out_dir = cfg.output_root().join(format!("compare-{}", cfg.content_hash()?));
    prepare_dir(&out_dir, force)?;
    write_text(&out_dir.join(CONFIG_FILE), &cfg.to_toml()?)?;

    let mut summary = Vec::new();
    let mut ctde = Vec::new();
    let mut iddpg = Vec::new();
    for &seed in &cfg.seeds {
        for algo in [Algo::Ctde, Algo::Iddpg] {
            let dir = out_dir.join("runs").join(format!("{algo}-seed{seed}"));
            let trained = train_into(cfg, algo, seed, &dir, false)?;
            let report = evaluate(&trained.agents, &cfg.scenario, cfg.eval_episodes, seed, cfg.training.satisfaction_tol)
                .map_err(|e| CliError::from(e).context(&format!("evaluating {algo} seed {seed}")))?;
            summary.push(EvalSummaryRow::new(seed, algo.as_str(), &report));
            match algo {
                Algo::Ctde => ctde.push(report),
                Algo::Iddpg => iddpg.push(report),
            }
        }
    }

    let tag = |rs: &[EvalReport]| cfg.seeds.iter().copied().zip(rs.iter().cloned()).collect::<Vec<_>>();
    let deltas = paired_deltas(&tag(&ctde), &tag(&iddpg))?;
    let ctde_aggregate = aggregate(&ctde)?;
    let iddpg_aggregate = aggregate(&iddpg)?;
    let mut agg_rows = AggregateRow::from_report(Algo::Ctde, &ctde_aggregate);
    agg_rows.extend(AggregateRow::from_report(Algo::Iddpg, &iddpg_aggregate));

    write_csv(&out_dir.join(EVAL_SUMMARY), &summary)?;
    write_csv(&out_dir.join("paired_deltas.csv"), &deltas)?;
    write_csv(&out_dir.join("aggregate.csv"), &agg_rows)?;
    write_csv(&out_dir.join("hourly_profile_ctde.csv"), &mean_hourly(&ctde))?;
    write_csv(&out_dir.join("hourly_profile_iddpg.csv"), &mean_hourly(&iddpg))?;

    println!("{:<20} {:>14} {:>14}", "metric", "ctde", "iddpg");
    for (c, i) in AggregateRow::from_report(Algo::Ctde, &ctde_aggregate)
        .iter()
        .zip(AggregateRow::from_report(Algo::Iddpg, &iddpg_aggregate))
    {
        println!("{:<20} {:>14} {:>14}", c.metric, format_number(c.mean), format_number(i.mean));
    }
    Ok(CompareReport { out_dir, seeds: cfg.seeds.clone(), ctde, iddpg, deltas, ctde_aggregate, iddpg_aggregate })
}

/// A policy's schedule on the oracle instance and its gap to the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGap {
    /// `schedule[hour][agent]` after snapping to the grid.
    pub schedule: Vec<Vec<f64>>,
    pub cost: f64,
    pub par: f64,
    pub feasible: bool,
    /// `100 * (policy - oracle) / oracle`.
    pub cost_gap_pct: f64,
    pub par_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub out_dir: PathBuf,
    pub solution: OracleSolution,
    /// Whether a full unpruned enumeration found nothing cheaper.
    pub certified: bool,
    pub policy: Option<PolicyGap>,
}

#[derive(Debug, Clone, PartialEq)]
struct ScheduleRow {
    source: &'static str,
    hour: usize,
    agent: usize,
    action_kw: f64,
}

impl CsvRecord for ScheduleRow {
    fn header() -> &'static [&'static str] {
        &["source", "hour", "agent", "action_kw"]
    }

    fn row(&self) -> Vec<String> {
        vec![self.source.into(), self.hour.to_string(), self.agent.to_string(), format_number(self.action_kw)]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct OracleSummaryRow {
    source: &'static str,
    network_cost: f64,
    par: f64,
    feasible: bool,
    cost_gap_pct: f64,
    par_gap: f64,
}

impl CsvRecord for OracleSummaryRow {
    fn header() -> &'static [&'static str] {
        &["source", "network_cost", "par", "feasible", "cost_gap_pct", "par_gap"]
    }

    fn row(&self) -> Vec<String> {
        vec![
            self.source.into(),
            format_number(self.network_cost),
            format_number(self.par),
            self.feasible.to_string(),
            format_number(self.cost_gap_pct),
            format_number(self.par_gap),
        ]
    }
}

fn schedule_rows(source: &'static str, schedule: &[Vec<f64>]) -> Vec<ScheduleRow> {
    schedule
        .iter()
        .enumerate()
        .flat_map(|(hour, row)| {
            row.iter().enumerate().map(move |(agent, &action_kw)| ScheduleRow { source, hour, agent, action_kw })
        })
        .collect()
}

/// Rolls each agent's own-observation policy out on `network`, snapping
/// every action to the nearest grid rate before it reaches the network.
pub fn snapped_rollout(
    agents: &[AgentNets],
    network: &EvNetwork,
    price_ref: f64,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>, CliError> {
    let profiles = network.profiles();
    let horizon = network.horizon();
    let trace = network
        .rollout(|i, o| {
            policy_action(&agents[i], o, &profiles[i], horizon, price_ref)
                .map(|a| snap_to_grid(a, grid))
                .map_err(|e| evcharge::env::EnvError::Contract(e.to_string()))
        })
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let by_agent = trace.action_matrix();
    Ok((0..horizon).map(|h| by_agent.iter().map(|row| row[h]).collect()).collect())
}

/// Solves the oracle instance, certifies the optimum and, given a
/// checkpoint, reports the policy's gap on the same instance.
pub fn cmd_oracle(cfg: &RunConfig, checkpoint: Option<&Path>, force: bool) -> Result<OracleReport, CliError> {
    cfg.validate()?;
    let oc = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| CliError::Config("oracle: section missing".into()))?;
    let inst = cfg.oracle_instance(oc)?;
    let solution = solve(&inst)?;
    let certified = verify_optimal(&inst, &solution)?;

    let policy = match checkpoint {
        None => None,
        Some(path) => {
            let ck = load_checkpoint(path)?;
            ck.check(cfg.scenario.agents)?;
            let net = cfg
                .scenario
                .network(inst.profiles.clone())
                .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
            let price_ref = cfg.scenario.reference_price().map_err(|e| CliError::Config(e.to_string()))?;
            let schedule = snapped_rollout(&ck.agents, &net, price_ref, &inst.action_grid)?;
            let (cost, par, _) = schedule_cost(&schedule, &inst)?;
            let feasible = check_feasible(&schedule, &inst)?;
            Some(PolicyGap {
                cost_gap_pct: 100.0 * (cost - solution.cost) / solution.cost,
                par_gap: par - solution.par,
                schedule,
                cost,
                par,
                feasible,
            })
        }
    };

    let out_dir = cfg.output_root().join(format!("oracle-{}", cfg.content_hash()?));
    prepare_dir(&out_dir, force)?;
    let mut rows = schedule_rows("oracle", &solution.schedule);
    let mut summary = vec![OracleSummaryRow {
        source: "oracle",
        network_cost: solution.cost,
        par: solution.par,
        feasible: true,
        cost_gap_pct: 0.0,
        par_gap: 0.0,
    }];
    if let Some(p) = &policy {
        rows.extend(schedule_rows("policy", &p.schedule));
        summary.push(OracleSummaryRow {
            source: "policy",
            network_cost: p.cost,
            par: p.par,
            feasible: p.feasible,
            cost_gap_pct: p.cost_gap_pct,
            par_gap: p.par_gap,
        });
    }
    write_csv(&out_dir.join("oracle_schedule.csv"), &rows)?;
    write_csv(&out_dir.join("oracle_summary.csv"), &summary)?;

    println!("oracle: {} schedules evaluated, certified optimal: {certified}", solution.evaluated);
    for (h, row) in solution.schedule.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|a| format_number(*a)).collect();
        println!("  hour {h:>2}: [{}] load {}", cells.join(", "), format_number(solution.loads[h]));
    }
    for s in &summary {
        println!(
            "{:<7} cost {} par {} feasible {} gap {}%",
            s.source,
            format_number(s.network_cost),
            format_number(s.par),
            s.feasible,
            format_number(s.cost_gap_pct)
        );
    }
    Ok(OracleReport { out_dir, solution, certified, policy })
}
