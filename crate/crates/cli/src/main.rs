//! `multipatch` command-line tool.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "multipatch", version, about = "Multi-view plane-sweep depth estimation with learned patch similarity")]
struct Cli {
    /// JSON run configuration. Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). With 1 thread reruns are bit-exact.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic scene directory.
    Gen(commands::gen::Args),
    /// Cut balanced training patches into a cache file.
    Sample(commands::sample::Args),
    /// Train the similarity network.
    Train(commands::train::Args),
    /// Estimate the reference depth map of a scene.
    Sweep(commands::sweep::Args),
    /// Accuracy and completeness of depth maps against ground truth.
    Eval(commands::eval::Args),
    /// Check analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::Args),
    /// Time the pipeline stages.
    Bench(commands::bench::Args),
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::Gen(a) => a.apply(&mut cfg),
        Command::Sample(a) => a.apply(&mut cfg),
        Command::Train(a) => a.apply(&mut cfg),
        Command::Sweep(a) => a.apply(&mut cfg),
        Command::Eval(a) => a.apply(&mut cfg),
        Command::Gradcheck(a) => a.apply(&mut cfg),
        Command::Bench(a) => a.apply(&mut cfg),
    }
    cfg.validate()?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot start the thread pool: {e}")))?;
    match &cli.command {
        Command::Gen(a) => commands::gen::run(a, &cfg),
        Command::Sample(a) => commands::sample::run(a, &cfg),
        Command::Train(a) => commands::train::run(a, &cfg),
        Command::Sweep(a) => commands::sweep::run(a, &cfg),
        Command::Eval(a) => commands::eval::run(a, &cfg),
        Command::Gradcheck(a) => commands::gradcheck::run(a, &cfg),
        Command::Bench(a) => commands::bench::run(a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
