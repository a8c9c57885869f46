use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evcharge::marl::Algo;
use evcharge_cli::config::{Overrides, RunConfig};
use evcharge_cli::{cmd_compare, cmd_eval, cmd_oracle, cmd_train, CliError};

/// Multi-agent EV charging experiments.
#[derive(Parser)]
#[command(name = "evcharge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm on one seed.
    Train(Common),
    /// Evaluate a checkpoint without exploration noise.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation episodes (defaults to eval_episodes from the config).
        #[arg(long = "eval-episodes")]
        eval_episodes: Option<usize>,
    },
    /// Train and evaluate both algorithms on matched seeds.
    Compare(Common),
    /// Solve the oracle instance, optionally scoring a checkpoint against it.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output root (defaults to $EVCHARGE_OUT, then ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            algo: self.algo,
            agents: self.agents,
            episodes: self.episodes,
            seeds: self.seeds.clone().or(self.seed.map(|s| vec![s])),
            out: self.out.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.load()?;
            for &seed in &cfg.seeds {
                cmd_train(&cfg, seed, c.force)?;
            }
        }
        Command::Eval { common, checkpoint, eval_episodes } => {
            let cfg = common.load()?;
            let episodes = eval_episodes.unwrap_or(cfg.eval_episodes);
            for &seed in &cfg.seeds {
                let out = common.out.as_ref().map(|o| o.join(format!("eval-seed{seed}")));
                cmd_eval(&cfg, &checkpoint, episodes, seed, out.as_deref(), common.force)?;
            }
        }
        Command::Compare(c) => {
            let cfg = c.load()?;
            let report = cmd_compare(&cfg, c.force)?;
            println!("results in {}", report.out_dir.display());
        }
        Command::Oracle { common, checkpoint } => {
            let cfg = common.load()?;
            let report = cmd_oracle(&cfg, checkpoint.as_deref(), common.force)?;
            println!("results in {}", report.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
