//! `accs <experiment> [--config FILE] [--seed S] [--threads T] [--out DIR]`

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::experiments::run_experiment;
use crate::output::{write_outputs, RunMeta};

#[derive(Debug, Parser)]
#[command(name = "accs", version, about = "Blind multi-coil compressed sensing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Success rate over a (k, n, C, L) grid.
    PhaseTransition(RunArgs),
    /// Success rate against L, with the minimal L per curve.
    LSweep(RunArgs),
    /// Reconstruction error against L for several coil counts.
    CoilSweep(RunArgs),
    /// Reconstruct one image from k-space or a PGM.
    Reconstruct(RunArgs),
    /// Exact dual certificates for random instances.
    Certify(RunArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Key = value configuration file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn split(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::PhaseTransition(a) => (ExperimentKind::PhaseTransition, a),
            Command::LSweep(a) => (ExperimentKind::LSweep, a),
            Command::CoilSweep(a) => (ExperimentKind::CoilSweep, a),
            Command::Reconstruct(a) => (ExperimentKind::Reconstruct, a),
            Command::Certify(a) => (ExperimentKind::Certify, a),
        }
    }
}

/// Resolve the configuration for a subcommand.
pub fn load_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path, kind)?,
        None => ExperimentConfig::defaults(kind),
    };
    if cfg.kind != kind {
        return Err(HarnessError::config(format!(
            "config is for experiment '{}' but the command is '{kind}'",
            cfg.kind
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let (kind, args) = cli.command.split();
    let cfg = load_config(kind, args)?;
    if args.threads == Some(0) {
        return Err(HarnessError::config("--threads must be at least 1"));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::config(format!("cannot start thread pool: {e}")))?;
    let start = Instant::now();
    let run = pool.install(|| run_experiment(&cfg))?;
    let meta = RunMeta { threads: pool.current_num_threads(), wall_time: start.elapsed() };
    write_outputs(&cfg.output_dir, &cfg, &run, &meta)?;
    eprintln!("accs: wrote {} results to {}", kind, cfg.output_dir.display());
    Ok(())
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("accs: {e}");
            e.exit_code()
        }
    }
}
