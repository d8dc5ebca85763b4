//! Command-line surface of the inversion engine.
//!
//! Exit codes: 0 success, 1 internal failure, 2 config error, 3 oracle
//! unreachable, 4 dimension mismatch.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use latinv_core::maddpg::CriticMode;
use latinv_core::ndmath::gradcheck::GradCheckConfig;
use latinv_core::oracle::Endpoint;

use config::{parse_dims, parse_labels, DimList, LabelSelection, OracleSpec, RunConfig};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "latinv", version, about = "Black-box latent distribution inversion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// JSON run config; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Target labels: `all` or a comma-separated list.
    #[arg(long, value_parser = parse_labels)]
    pub label: Option<LabelSelection>,
    /// Training seed; for bench-agents, the single seed to run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Critic wiring: `maddpg` or `independent`.
    #[arg(long)]
    pub mode: Option<CriticMode>,
    /// `builtin`, `cmd:<program> [args]` or `tcp:<host>:<port>`.
    #[arg(long)]
    pub oracle: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train both agents per label and write report.json, rewards.csv, eval.json.
    Attack(RunFlags),
    /// Score a distribution file against the oracle.
    Eval {
        #[command(flatten)]
        run: RunFlags,
        /// Distribution JSON: {"mu": [...], "sigma": [...]}.
        #[arg(long)]
        dist: PathBuf,
    },
    /// Compare centralized and independent critics over seeds and labels.
    BenchAgents(RunFlags),
    /// Serve a builtin oracle over the line protocol.
    OracleServe {
        /// Oracle spec JSON; the default testbed when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Accept TCP connections here instead of using stdin/stdout.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Finite-difference check of the network gradients.
    Gradcheck {
        #[arg(long, default_value_t = GradCheckConfig::default().nets)]
        nets: usize,
        #[arg(long, default_value_t = GradCheckConfig::default().seed)]
        seed: u64,
        /// Negates one layer's weight gradient; the check must then fail.
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Repeat the attack across latent dimensions.
    SweepDims {
        #[command(flatten)]
        run: RunFlags,
        /// Comma-separated dimensions.
        #[arg(long, value_parser = parse_dims)]
        dims: Option<DimList>,
    },
}

impl RunFlags {
    /// Loads the config and applies command-line overrides.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(labels) = &self.label {
            config.labels = labels.0.clone();
        }
        if let Some(seed) = self.seed {
            config.trainer.seed = seed;
            config.seeds = vec![seed];
        }
        if let Some(mode) = self.mode {
            config.trainer.critic_mode = mode;
        }
        if let Some(oracle) = &self.oracle {
            config.oracle = match oracle.as_str() {
                "builtin" if config.oracle.is_builtin() => config.oracle,
                "builtin" => OracleSpec::Testbed {
                    latent_dim: config.trainer.latent_dim,
                    num_classes: 5,
                },
                other => OracleSpec::External {
                    endpoint: other
                        .parse::<Endpoint>()
                        .map_err(|e| CliError::Config(format!("--oracle: {e}")))?,
                },
            };
        }
        Ok(config)
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Attack(run) => commands::cmd_attack(&run.resolve()?),
        Command::Eval { run, dist } => {
            commands::cmd_eval(&run.resolve()?, &dist, run.out.as_deref()).map(|_| ())
        }
        Command::BenchAgents(run) => commands::cmd_bench_agents(&run.resolve()?).map(|_| ()),
        Command::OracleServe { config, listen } => {
            let spec = match config {
                Some(path) => output::read_json(&path)?,
                None => OracleSpec::default(),
            };
            commands::cmd_oracle_serve(&spec, listen.as_deref())
        }
        Command::Gradcheck {
            nets,
            seed,
            inject_sign_flip,
        } => commands::cmd_gradcheck(nets, seed, inject_sign_flip).map(|_| ()),
        Command::SweepDims { run, dims } => {
            let mut config = run.resolve()?;
            if let Some(dims) = dims {
                config.dims = dims.0;
            }
            commands::cmd_sweep_dims(&config).map(|_| ())
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("latinv: {e}");
            e.exit_code()
        }
    }
}
