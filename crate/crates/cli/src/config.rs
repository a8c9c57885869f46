use std::fs;
use std::path::{Path, PathBuf};

use evcharge::env::Scenario;
use evcharge::marl::{Algo, TrainConfig};
use evcharge::oracle::{DEFAULT_ENUMERATION_CAP, DEFAULT_FEASIBILITY_TOL};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "EVCHARGE_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "runs";

/// Oracle instance settings. The instance itself is the scenario's
/// mean-profile day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Allowed rates in kW; `[0, a_max / 2, a_max]` when empty.
    pub action_grid: Vec<f64>,
    pub feasibility_tol: f64,
    pub enumeration_cap: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            action_grid: Vec::new(),
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root for run directories; falls back to `$EVCHARGE_OUT`, then `runs`.
    pub output_dir: Option<PathBuf>,
    pub algo: Algo,
    pub seeds: Vec<u64>,
    /// Noise-free episodes per evaluation.
    pub eval_episodes: usize,
    pub scenario: Scenario,
    /// Everything but `algo` and `seed`, which come from the top level.
    pub training: TrainConfig,
    pub oracle: Option<OracleConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: None,
            algo: Algo::Ctde,
            seeds: vec![0],
            eval_episodes: 200,
            scenario: Scenario::default(),
            training: TrainConfig::default(),
            oracle: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub algo: Option<Algo>,
    pub agents: Option<usize>,
    pub episodes: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(training) = raw.get("training").and_then(|t| t.as_table()) {
            for key in ["algo", "seed"] {
                if training.contains_key(key) {
                    return Err(CliError::Config(format!(
                        "training.{key}: set `{}` at the top level instead",
                        if key == "seed" { "seeds" } else { key }
                    )));
                }
            }
        }
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.training.algo = cfg.algo;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(a) = o.algo {
            self.algo = a;
            self.training.algo = a;
        }
        if let Some(n) = o.agents {
            self.scenario.agents = n;
        }
        if let Some(e) = o.episodes {
            self.training.episodes = e;
        }
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
    }

    /// Checks every section; messages carry the offending section.
    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario.validate().map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        self.training.validate().map_err(|e| CliError::Config(format!("training: {e}")))?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds: at least one seed is required".into()));
        }
        if self.eval_episodes == 0 {
            return Err(CliError::Config("eval_episodes: must be positive".into()));
        }
        if let Some(o) = &self.oracle {
            self.oracle_instance(o).map_err(|e| CliError::Config(format!("oracle: {e}")))?;
        }
        Ok(())
    }

    /// Training config for one arm and seed.
    pub fn train_config(&self, algo: Algo, seed: u64) -> TrainConfig {
        TrainConfig { algo, seed, ..self.training.clone() }
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// The fully defaulted config as TOML. Feeding it back in reproduces
    /// this config exactly.
    pub fn to_toml(&self) -> Result<String, CliError> {
        let ser = |e: toml::ser::Error| CliError::Runtime(format!("serializing config: {e}"));
        let mut table = toml::Table::try_from(self).map_err(ser)?;
        if let Some(training) = table.get_mut("training").and_then(|t| t.as_table_mut()) {
            training.remove("algo");
            training.remove("seed");
        }
        toml::to_string(&table).map_err(ser)
    }

    /// Short digest of the sections that influence results (scenario,
    /// training, evaluation length).
    pub fn content_hash(&self) -> Result<String, CliError> {
        #[derive(Serialize)]
        struct Hashed<'a> {
            eval_episodes: usize,
            scenario: &'a Scenario,
            training: &'a TrainConfig,
        }
        // Arm and seed are named separately in run directories.
        let training = self.train_config(Algo::Ctde, 0);
        let text = toml::to_string(&Hashed {
            eval_episodes: self.eval_episodes,
            scenario: &self.scenario,
            training: &training,
        })
        .map_err(|e| CliError::Runtime(format!("serializing config: {e}")))?;
        Ok(hex::encode(&Sha256::digest(text.as_bytes())[..6]))
    }

    pub fn oracle_instance(&self, o: &OracleConfig) -> Result<evcharge::oracle::OracleInstance, CliError> {
        let s = &self.scenario;
        let profile = s.behavior.mean_profile(&s.physical);
        let grid = if o.action_grid.is_empty() {
            vec![0.0, profile.max_rate / 2.0, profile.max_rate]
        } else {
            o.action_grid.clone()
        };
        let prices = s.price_model().map_err(|e| CliError::Config(e.to_string()))?;
        let mut inst = evcharge::oracle::OracleInstance::new(vec![profile; s.agents], prices, s.horizon, s.dt_hours, grid)
            .map_err(|e| CliError::Config(e.to_string()))?;
        inst.feasibility_tol = o.feasibility_tol;
        inst.enumeration_cap = o.enumeration_cap;
        inst.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(inst)
    }
}
