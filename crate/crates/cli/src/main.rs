//! Experiment runner. One config file describes one run; the subcommand must
//! match the config's `command` field. Fixed seeds make every output
//! byte-reproducible, including across `--threads` settings.

use clap::{Args, Parser, Subcommand};
use ssicl_cli::commands;
use ssicl_cli::config::{self, CommandKind};
use ssicl_cli::error::{CliError, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ssicl",
    version,
    about = "Semi-supervised in-context learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy curves over a swept parameter, one row per predictor per value.
    Curve(CommonArgs),
    /// Tuned mixing weights over a swept parameter.
    #[command(alias = "alpha_sweep")]
    AlphaSweep(CommonArgs),
    /// Train an attention stack and report restart statistics.
    Train(CommonArgs),
    /// Run the pseudo-labeling loop on a CSV dataset.
    Looptab(CommonArgs),
    /// Tabulate the analytic error quantities over a grid.
    #[command(alias = "theory_table")]
    TheoryTable(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Curve(_) => CommandKind::Curve,
            Command::AlphaSweep(_) => CommandKind::AlphaSweep,
            Command::Train(_) => CommandKind::Train,
            Command::Looptab(_) => CommandKind::Looptab,
            Command::TheoryTable(_) => CommandKind::TheoryTable,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Curve(a)
            | Command::AlphaSweep(a)
            | Command::Train(a)
            | Command::Looptab(a)
            | Command::TheoryTable(a) => a,
        }
    }
}

fn run(command: &Command) -> Result<()> {
    let args = command.args();
    let mut spec = config::load(&args.config)?;
    if spec.command != command.kind() {
        return Err(CliError::config(format!(
            "config declares command `{}` but the `{}` subcommand was invoked",
            spec.command.name(),
            command.kind().name()
        )));
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output = out.clone();
    }
    config::validate(&spec)?;

    match args.threads {
        Some(threads) if threads > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::config(format!("cannot build thread pool: {e}")))?
            .install(|| commands::dispatch(&spec)),
        Some(_) => Err(CliError::config("--threads must be at least 1")),
        None => commands::dispatch(&spec),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli.command) {
        let payload = serde_json::json!({
            "error": { "category": err.category, "message": err.message }
        });
        eprintln!("{payload}");
        std::process::exit(err.category.exit_code());
    }
}
