//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 I/O error. Nothing is written unless the experiment succeeds.

mod config;
mod output;
mod run;
mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{
    config_hash, parse_config, BoundsSource, ConfigError, Experiment, Format, ModelConfig,
    OutputConfig, Plan, RunConfig, SCHEMA_VERSION,
};
pub use output::{fmt_real, Meta};
pub use run::{execute, Outcome, RunError};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FREESTM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "freestm-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "freestm",
    version,
    about = "Free stochastic theta method experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; defaults to the configuration, then $FREESTM_OUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Suppress all non-error output.
    #[arg(long, short, global = true)]
    quiet: bool,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Eigenvalue histogram of the terminal states.
    Spectrum,
    /// Strong convergence order against a fine reference.
    Converge,
    /// Mean-square stability sweep over step sizes.
    Stability,
    /// Monte Carlo check of the free Itô rule.
    Moments,
    /// Theoretical step-size bound and decay rates.
    Bounds,
    /// Ensemble means of trace statistics over time.
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Converge => "converge",
            Command::Stability => "stability",
            Command::Moments => "moments",
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
        }
    }
}

/// Parses `args` (including the program name), runs the experiment and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(()) => EXIT_OK,
        Err((code, message)) => {
            eprintln!("error: {message}");
            code
        }
    }
}

fn run_cli(cli: &Cli) -> Result<(), (i32, String)> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| (EXIT_CONFIG, "--config <path> is required".to_string()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
    let config_error = |e: ConfigError| (EXIT_CONFIG, format!("invalid configuration: {e}"));
    let mut cfg = parse_config(&text).map_err(config_error)?;
    if cfg.experiment.name() != cli.command.name() {
        return Err(config_error(ConfigError {
            field: "experiment.kind".into(),
            message: format!(
                "is '{}' but the '{}' command was requested",
                cfg.experiment.name(),
                cli.command.name()
            ),
        }));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let plan = cfg.plan().map_err(config_error)?;
    if cli.threads == Some(0) {
        return Err((EXIT_CONFIG, "--threads must be at least 1".into()));
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

    let meta = Meta {
        command: cli.command.name().into(),
        schema_version: cfg.schema_version,
        config_hash: config_hash(&text),
        seed: cfg.seed,
    };
    let work = || execute(&plan, &meta, &cfg.output.formats);
    let outcome = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| (EXIT_IO, format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    }
    .map_err(|e| match e {
        RunError::Numerics(e) if e.is_numerical() => {
            (EXIT_NUMERICAL, format!("numerical failure: {e}"))
        }
        RunError::Numerics(e) => (EXIT_CONFIG, format!("invalid configuration: {e}")),
        RunError::Render(e) => (EXIT_IO, e.to_string()),
    })?;

    let written = outcome
        .artifacts
        .write_all(&out_dir)
        .map_err(|(p, e)| (EXIT_IO, format!("cannot write {}: {e}", p.display())))?;
    if !cli.quiet {
        println!("{}", outcome.summary);
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}
