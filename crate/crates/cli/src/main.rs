//! `emcar`: generate heterogeneous matching data, train and evaluate the
//! matcher, predict pairs and dump attention.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Overrides;
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "emcar", version, about = "Heterogeneous entity matching with attribute-association attention")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (training seed; generator seed for `gen`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of seeded training runs.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Checkpoint directory to write (`train`) or read (other commands).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output path; defaults depend on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate UIS-style tables and pairs; prints the dataset summary.
    Gen,
    /// Split, train `runs` seeded models and write metrics JSON.
    Train,
    /// Score a checkpoint on the test split.
    Eval,
    /// One prediction JSON line per pair in a JSON Lines file.
    Predict { pairs: PathBuf },
    /// Attention dump JSON for each pair in a JSON Lines file.
    Inspect { pairs: PathBuf },
}

/// Command failure: `Usage` for invalid requests (exit 2), `Runtime` for
/// failures while doing the work (exit 1).
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }

    pub fn runtime(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<emcar_core::Error> for Failure {
    fn from(e: emcar_core::Error) -> Self {
        use emcar_core::Error as E;
        match e {
            E::Config(_) | E::Argument(_) | E::MissingFile(_) => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    let ov = Overrides {
        seed: cli.seed,
        runs: cli.runs,
        checkpoint: cli.checkpoint,
        out: cli.out,
    };
    match cli.command {
        Command::Gen => commands::gen(&cfg, &ov),
        Command::Train => commands::train(&cfg, &ov),
        Command::Eval => commands::eval(&cfg, &ov),
        Command::Predict { pairs } => commands::predict(&cfg, &ov, &pairs),
        Command::Inspect { pairs } => commands::inspect(&cfg, &ov, &pairs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, code, err) = match f {
                Failure::Usage(e) => ("usage", 2, e),
                Failure::Runtime(e) => ("runtime", 1, e),
            };
            let message = format!("{err:#}");
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(code)
        }
    }
}
