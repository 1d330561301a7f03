//! Command-line experiment runner: parses a TOML configuration, runs one
//! experiment kind and writes stamped CSV/JSON outputs plus `manifest.json`.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Kind};
use experiments::RunError;
use output::OutputSet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "degen",
    version,
    about = "Experiments for diffusions degenerating at the boundary"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `numeric.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate ball paths.
    Simulate(Common),
    /// Run synchronously coupled pairs.
    Couple(Common),
    /// Coupling statistics over a grid of constant drifts.
    Sweep(Common),
    /// Feller classification of the boundary over (r, c).
    Classify(Common),
    /// Numerical verification of the supporting inequalities.
    VerifyInequalities(Common),
    /// Time spent near the boundary.
    Occupation(Common),
    /// Compare ball, radial and chart simulators in law.
    TransformCheck(Common),
    /// Drift decomposition, alpha and simulation on a general domain.
    Domain(Common),
    /// Threshold constants, classification table and inequality summary.
    PaperTables(Common),
}

impl Command {
    fn split(self) -> (Kind, Common) {
        match self {
            Command::Simulate(c) => (Kind::Simulate, c),
            Command::Couple(c) => (Kind::Couple, c),
            Command::Sweep(c) => (Kind::Sweep, c),
            Command::Classify(c) => (Kind::Classify, c),
            Command::VerifyInequalities(c) => (Kind::VerifyInequalities, c),
            Command::Occupation(c) => (Kind::Occupation, c),
            Command::TransformCheck(c) => (Kind::TransformCheck, c),
            Command::Domain(c) => (Kind::Domain, c),
            Command::PaperTables(c) => (Kind::PaperTables, c),
        }
    }
}

/// Loads, overrides and resolves the configuration for `kind`.
pub fn prepare(kind: Kind, common: &Common) -> Result<ExperimentConfig, config::ConfigError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.numeric.seed = Some(seed);
    }
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.clone());
    }
    cfg.resolve(kind)
}

/// Runs a resolved configuration and returns the exit code.
pub fn execute(kind: Kind, cfg: &ExperimentConfig, quiet: bool) -> i32 {
    let hash = output::config_hash(cfg);
    let mut out = match OutputSet::create(cfg.out_dir(), hash) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: output.dir {}: {e}", cfg.out_dir().display());
            return EXIT_CONFIG;
        }
    };
    match experiments::run(kind, cfg, &mut out) {
        Ok(outcome) => {
            let files: Vec<String> = out.files().iter().map(|f| f.file.clone()).collect();
            if let Err(e) = out.finish(cfg, outcome.passed, &outcome.summary) {
                eprintln!("error: output.dir {}: {e}", cfg.out_dir().display());
                return EXIT_CONFIG;
            }
            if !quiet {
                println!("{kind}: {}", if outcome.passed { "ok" } else { "ASSERTION FAILED" });
                println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
                println!("wrote {} to {}", files.join(", "), cfg.out_dir().display());
            }
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_ASSERTION
            }
        }
        Err(RunError::Config(m)) => {
            eprintln!("error: {m}");
            EXIT_CONFIG
        }
        Err(RunError::Io(e)) => {
            eprintln!("error: output.dir {}: {e}", cfg.out_dir().display());
            EXIT_CONFIG
        }
        Err(RunError::Model(e)) => {
            eprintln!("error: {e}");
            EXIT_ASSERTION
        }
    }
}

/// Entry point shared by the binary and the tests.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (kind, common) = cli.command.split();
    if let Some(t) = common.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_CONFIG;
        }
        // Ignored when a pool already exists in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = match prepare(kind, &common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    execute(kind, &cfg, common.quiet)
}
