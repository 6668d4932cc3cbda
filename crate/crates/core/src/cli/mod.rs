//! Command-line front end: `simulate`, `estimate`, `verify` and `rates`.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{BandwidthArg, ConfigError, RunConfig};
pub use io::IoError;

/// Exit status for a run whose checks all passed.
pub const EXIT_PASS: u8 = 0;
/// Exit status when an asserted check failed.
pub const EXIT_FAIL: u8 = 1;
/// Exit status for usage, configuration and input errors.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] crate::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "fpca", version, about = "Covariance and eigen-system estimation for discretely observed functional data")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, env = "FPCA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Base random seed.
    #[arg(long, global = true, env = "FPCA_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "FPCA_PARALLEL")]
    pub parallel: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "FPCA_OUT")]
    pub out: Option<PathBuf>,
    /// `fixed:<h>` or `corollary1`.
    #[arg(long, global = true, env = "FPCA_BANDWIDTH")]
    pub bandwidth: Option<BandwidthArg>,
    /// Index used by the `corollary1` bandwidth.
    #[arg(long, global = true, env = "FPCA_M")]
    pub m: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate datasets and score sidecars.
    Simulate,
    /// Estimate the covariance and its eigen-system from a dataset CSV.
    Estimate {
        /// Dataset CSV written by `simulate` (or in the same layout).
        #[arg(long, env = "FPCA_DATA")]
        data: PathBuf,
    },
    /// Run the verification suites listed in the configuration.
    Verify,
    /// Print rate, bandwidth and assumption evaluations.
    Rates(RatesArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RatesArgs {
    #[arg(long)]
    pub n: usize,
    /// Observations per curve.
    #[arg(long = "n-obs", visible_alias = "N")]
    pub n_obs: usize,
    /// Eigen-index.
    #[arg(long)]
    pub j: usize,
    /// Bandwidth; overrides `--bandwidth`.
    #[arg(long)]
    pub h: Option<f64>,
    /// Eigenvalue decay exponent.
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    /// Eigenfunction frequency exponent.
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
}

impl Cli {
    /// Loads the configuration and applies flag and environment overrides.
    pub fn resolved_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.parallel {
            cfg.parallel = p;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(b) = self.bandwidth {
            cfg.bandwidth = b;
        }
        if let Some(m) = self.m {
            cfg.m = Some(m);
        }
        cfg.validate().map_err(CliError::Usage)?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
