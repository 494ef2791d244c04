//! `mphom`: figure data, Fisher information sweeps and estimation studies
//! for multiphoton interference imaging, written as CSV with a JSON
//! manifest next to every output.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{RunOutcome, Runner, UsageError};
use config::{BucketArgs, ConfigFile, EstimateArgs, FiCurveArgs, FiVsNsArgs, FitArgs, SimulateArgs, SurfaceArgs};

#[derive(Debug, Parser)]
#[command(name = "mphom", version, about = "Multiphoton interference imaging of two thermal sources")]
struct Cli {
    /// TOML file with one table per subcommand, or a manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for relative output paths.
    #[arg(long, global = true, env = "MPHOM_OUTPUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Exit with status 3 if any value is flagged as not converged.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coincidence density of one outcome class on a momentum grid.
    ProbabilitySurface {
        #[command(flatten)]
        args: SurfaceArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fisher information per photon number against separation.
    FiCurve {
        #[command(flatten)]
        args: FiCurveArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fisher information per photon number against brightness.
    FiVsNs {
        #[command(flatten)]
        args: FiVsNsArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Momentum-resolved against bucket (camera counts only) information.
    BucketCompare {
        #[command(flatten)]
        args: BucketArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated simulation and maximum-likelihood estimation against the bound.
    Estimate {
        #[command(flatten)]
        args: EstimateArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a record of frames.
    Simulate {
        #[command(flatten)]
        args: SimulateArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum-likelihood separation of a record file.
    Fit {
        #[command(flatten)]
        args: FitArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<RunOutcome> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
        None => ConfigFile::default(),
    };
    let runner = Runner { out_dir: cli.out_dir, file };
    match cli.command {
        Command::ProbabilitySurface { args, out } => runner.probability_surface(args, out),
        Command::FiCurve { args, out } => runner.fi_curve(args, out),
        Command::FiVsNs { args, out } => runner.fi_vs_ns(args, out),
        Command::BucketCompare { args, out } => runner.bucket_compare(args, out),
        Command::Estimate { args, out } => runner.estimate(args, out),
        Command::Simulate { args, out } => runner.simulate(args, out),
        Command::Fit { args, out } => runner.fit(args, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let strict = cli.strict;
    match run(cli) {
        Ok(outcome) => {
            for p in &outcome.outputs {
                println!("{}", p.display());
            }
            if outcome.unconverged > 0 {
                eprintln!("warning: {} value(s) did not reach the error target", outcome.unconverged);
                if strict {
                    return ExitCode::from(3);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
