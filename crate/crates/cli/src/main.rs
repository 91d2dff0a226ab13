//! `mmstab`: drift verification, split-chain experiments and stability
//! sweeps from the command line.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when a
//! threshold precondition fails, 4 on an invariant breach, 1 otherwise.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmstab::fsutil::write_atomic;
use mmstab::net::Mode;

use config::{Overrides, RunConfig, ECHO_FILE};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mmstab", version, about, arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: $MMSTAB_OUT, then ./mmstab-out].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Number of stations.
    #[arg(long = "M", global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long = "lambda-r", global = true)]
    lambda_r: Option<f64>,
    #[arg(long = "lambda-g", global = true)]
    lambda_g: Option<f64>,
    #[arg(long, global = true)]
    slots: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Bisection tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trajectory and write it as a CSV trace.
    Simulate,
    /// Check the averaged drift condition and build a Foster certificate.
    Verify {
        /// Kernel document to verify instead of the built network kernel.
        #[arg(long, value_name = "PATH")]
        kernel: Option<PathBuf>,
    },
    /// Estimate regeneration times and the coupling tail of a split chain.
    Coupling,
    /// Measure idle probabilities on the network and on synthetic queues.
    Idle,
    /// Classify stability over a grid of green rates.
    Sweep,
    /// Locate the stability boundary in the green rate by bisection.
    Boundary,
    /// Print the theoretical threshold.
    Threshold,
    /// Merge sweep tables into one table and report.
    Report {
        tables: Vec<PathBuf>,
    },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            jobs: self.jobs,
            mode: self.mode,
            m: self.m,
            p: self.p,
            lambda_r: self.lambda_r,
            lambda_g: self.lambda_g,
            slots: self.slots,
            reps: self.reps,
            tol: self.tol,
        }
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    cfg.apply(&cli.common.overrides());
    match &cli.command {
        Command::Verify { kernel: Some(k) } => cfg.verify.kernel = Some(k.clone()),
        Command::Report { tables } => cfg.report.tables.extend(tables.iter().cloned()),
        _ => {}
    }
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    if let Command::Threshold = cli.command {
        return commands::threshold(&cfg);
    }
    let out = cfg.resolve_out();
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Verify { .. } => commands::verify(&mut cfg, &out),
        Command::Coupling => commands::coupling(&cfg, &out),
        Command::Idle => commands::idle(&cfg, &out),
        Command::Sweep => commands::sweep_cmd(&cfg, &out),
        Command::Boundary => commands::boundary(&mut cfg, &out),
        Command::Report { .. } => commands::report(&cfg, &out),
        Command::Threshold => unreachable!(),
    };
    let echo = out.join(ECHO_FILE);
    write_atomic(&echo, cfg.to_toml().as_bytes()).map_err(|e| CliError::io(&echo, e))?;
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mmstab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
