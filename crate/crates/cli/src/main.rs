//! Batch front end for the darcy-jko solver.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Outcome, Suite, TransformMode};
use config::{CostSpec, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "darcy-jko", version, about = "Minimizing-movement solver for inhomogeneous Darcy diffusion")]
struct Cli {
    /// Worker threads for parallel trials and transforms.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for generated data; overrides `io.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// `section.key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `io.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One minimizing-movement step from a density file.
    Step {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// The full flow from an initial density file.
    Flow {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// A verification suite on generated or given data.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        suite: Suite,
        /// Initial density for the `edi` suite.
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// c-transform, c̄-transform or c-concavification of a field.
    Ctransform {
        #[arg(value_enum)]
        mode: TransformMode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        /// Output field file.
        #[arg(long)]
        out: PathBuf,
        /// Quadratic cost time step; overrides `cost.tau`.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Stationary barrier of mass `barrier.lambda` on the configured domain.
    Barrier {
        #[command(flatten)]
        common: Common,
        /// Overrides `barrier.lambda`.
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn prepare(common: &Common, seed: Option<u64>) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = load(common.config.as_deref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(Outcome, String), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Step { common, input } => {
            let (cfg, out) = prepare(&common, cli.seed)?;
            commands::step(&cfg, &input, &out)
        }
        Command::Flow { common, input } => {
            let (cfg, out) = prepare(&common, cli.seed)?;
            commands::flow(&cfg, &input, &out)
        }
        Command::Verify { common, suite, input } => {
            let (cfg, out) = prepare(&common, cli.seed)?;
            commands::verify(&cfg, suite, input.as_deref(), &out)
        }
        Command::Ctransform { mode, config, input, out, tau } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(t) = tau {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(CliError::Usage(format!("--tau must be > 0, got {t}")));
                }
                cfg.cost = CostSpec::Quadratic { tau: t };
            }
            commands::ctransform(mode, &cfg.cost()?, &input, &out)
        }
        Command::Barrier { common, lambda } => {
            let (mut cfg, out) = prepare(&common, cli.seed)?;
            if lambda.is_some() {
                cfg.barrier_lambda = lambda;
            }
            commands::barrier(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok((outcome, summary)) => {
            print!("{summary}");
            match outcome {
                Outcome::Pass => ExitCode::SUCCESS,
                Outcome::Failed => ExitCode::from(2),
                Outcome::Uncertified => ExitCode::from(3),
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
    }
}
